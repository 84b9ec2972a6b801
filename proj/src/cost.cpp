#include "vshuffle/cost.hpp"

#include <fmt/format.h>

#include "vshuffle/layers.hpp"

namespace vshuffle {
namespace {

class Counter {
 public:
  explicit Counter(CostReport& r) : r_(r) {}

  void conv(const std::string& name, const Conv2dGeometry& g, std::int64_t frames,
            std::int64_t& h, std::int64_t& w) {
    const std::int64_t oh = g.out_h(h);
    const std::int64_t ow = g.out_w(w);
    const std::int64_t params = g.weight_count() + (g.bias ? g.out_channels : 0);
    add(name, "conv", params, frames * oh * ow * g.weight_count(), 0);
    h = oh;
    w = ow;
  }
  void bn(const std::string& name, std::int64_t c, std::int64_t elements) {
    add(name, "batchnorm", 2 * c, 0, elements);
  }
  void relu(const std::string& name, std::int64_t elements) {
    add(name, "relu", 0, 0, elements);
  }
  void data_movement(const std::string& name, const std::string& kind) {
    add(name, kind, 0, 0, 0);
  }
  void add(const std::string& name, const std::string& kind, std::int64_t params,
           std::int64_t madds, std::int64_t aux) {
    r_.entries.push_back({name, kind, params, madds, aux});
    r_.total_params += params;
    r_.total_madds += madds;
    r_.total_aux_ops += aux;
  }

 private:
  CostReport& r_;
};

std::string human(std::int64_t v, double scale, const char* suffix) {
  return fmt::format("{:.2f}{}", static_cast<double>(v) / scale, suffix);
}

}  // namespace

CostReport count_flops(const NetworkConfig& cfg, const Shape& input) {
  cfg.validate();
  check_shape(input);
  if (input.t != cfg.frames || input.c != cfg.in_channels) {
    throw ConfigError("cost input " + input.str() + " does not match config (T=" +
                      std::to_string(cfg.frames) + ", C=" +
                      std::to_string(cfg.in_channels) + ")");
  }
  CostReport report;
  report.config_name = cfg.name;
  report.input = input;
  Counter k(report);
  const std::int64_t frames = input.n * input.t;
  std::int64_t h = input.h;
  std::int64_t w = input.w;

  k.conv("conv1", {cfg.in_channels, cfg.stem_width, 7, 7, 2, 3, false}, frames, h, w);
  k.bn("bn1", cfg.stem_width, frames * cfg.stem_width * h * w);
  k.relu("relu1", frames * cfg.stem_width * h * w);
  const PoolGeometry pool;
  h = pool.out_size(h);
  w = pool.out_size(w);
  k.add("pool1", "maxpool", 0, 0, frames * cfg.stem_width * h * w * pool.kernel * pool.kernel);

  std::int64_t in = cfg.stem_width;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& st = cfg.stages[s];
    for (std::int64_t b = 0; b < st.blocks; ++b) {
      const std::string p = "res" + std::to_string(s + 2) + "." + std::to_string(b);
      const BlockVariant v = cfg.variant_at(static_cast<std::int64_t>(s), b);
      const std::int64_t stride = b == 0 ? st.stride : 1;
      const std::int64_t width = st.width;
      const std::int64_t out = width * cfg.expansion;
      const std::int64_t in_h = h;
      const std::int64_t in_w = w;

      if (v == BlockVariant::kStandardWithShift) k.data_movement(p + ".shift", "shift");
      if (v == BlockVariant::kHeadtail) k.data_movement(p + ".shuffle", "shuffle");
      k.conv(p + ".conv1", {in, width, 1, 1, 1, 0, false}, frames, h, w);
      k.bn(p + ".bn1", width, frames * width * h * w);
      k.relu(p + ".relu1", frames * width * h * w);
      if (v == BlockVariant::kCompact) k.data_movement(p + ".shuffle", "shuffle");
      k.conv(p + ".conv2", {width, width, 3, 3, stride, 1, false}, frames, h, w);
      if (v == BlockVariant::kCompact) k.data_movement(p + ".unshuffle", "shuffle");
      k.bn(p + ".bn2", width, frames * width * h * w);
      k.relu(p + ".relu2", frames * width * h * w);
      k.conv(p + ".conv3", {width, out, 1, 1, 1, 0, false}, frames, h, w);
      k.bn(p + ".bn3", out, frames * out * h * w);
      if (v == BlockVariant::kHeadtail) k.data_movement(p + ".unshuffle", "shuffle");
      if (stride != 1 || in != out) {
        std::int64_t ph = in_h;
        std::int64_t pw = in_w;
        k.conv(p + ".downsample.conv", {in, out, 1, 1, stride, 0, false}, frames, ph, pw);
        k.bn(p + ".downsample.bn", out, frames * out * ph * pw);
      }
      k.add(p + ".add", "add", 0, 0, frames * out * h * w);
      k.relu(p + ".relu3", frames * out * h * w);
      in = out;
    }
  }
  k.add("avgpool", "avgpool", 0, 0, frames * in * h * w);
  k.data_movement("dropout", "dropout");
  k.add("fc", "linear", in * cfg.num_classes + cfg.num_classes,
        input.n * in * cfg.num_classes, 0);
  return report;
}

CostReport count_params(const NetworkConfig& cfg) {
  return count_flops(cfg, Shape{1, cfg.frames, cfg.in_channels, cfg.input_size,
                                cfg.input_size});
}

std::string CostReport::table(bool per_layer) const {
  std::string out;
  out += fmt::format("# cost report: {} input {}\n", config_name, input.str());
  out += "# FLOPs = conv+linear multiply-adds (1 madd = 1 FLOP); 2x-ops = 2*madds;\n";
  out += "# aux (batchnorm/relu/add 1/elem, maxpool k*k/out, avgpool 1/in) excluded from FLOPs\n";
  if (per_layer) {
    std::size_t name_w = 5;
    for (const auto& e : entries) name_w = std::max(name_w, e.name.size());
    out += fmt::format("{:<{}}  {:<9}  {:>12}  {:>16}  {:>14}\n", "layer", name_w, "kind",
                       "params", "madds", "aux_ops");
    for (const auto& e : entries) {
      out += fmt::format("{:<{}}  {:<9}  {:>12}  {:>16}  {:>14}\n", e.name, name_w, e.kind,
                         e.params, e.madds, e.aux_ops);
    }
  }
  out += fmt::format("total  params {} ({})  FLOPs {} ({})  2x-ops {}  aux {}\n",
                     human(total_params, 1e6, "M"), total_params,
                     human(flops(), 1e9, "G"), flops(), human(ops_2x(), 1e9, "G"),
                     human(total_aux_ops, 1e9, "G"));
  return out;
}

nlohmann::json CostReport::to_json() const {
  nlohmann::json j;
  j["config"] = config_name;
  j["input"] = {input.n, input.t, input.c, input.h, input.w};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& e : entries) {
    layers.push_back({{"name", e.name},
                      {"kind", e.kind},
                      {"params", e.params},
                      {"madds", e.madds},
                      {"aux_ops", e.aux_ops}});
  }
  j["layers"] = std::move(layers);
  j["total_params"] = total_params;
  j["total_madds"] = total_madds;
  j["flops"] = flops();
  j["ops_2x"] = ops_2x();
  j["total_aux_ops"] = total_aux_ops;
  return j;
}

}  // namespace vshuffle
