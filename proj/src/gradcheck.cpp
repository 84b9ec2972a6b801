#include "vshuffle/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "vshuffle/blocks.hpp"
#include "vshuffle/network.hpp"
#include "vshuffle/temporal_ops.hpp"
#include "vshuffle/training.hpp"

namespace vshuffle {

std::int64_t GradCheckReport::checked() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::int64_t GradCheckReport::skipped() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

bool GradCheckReport::pass() const {
  const bool entries_ok =
      std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  const auto sampled = static_cast<double>(checked() + skipped());
  return entries_ok && checked() > 0 &&
         static_cast<double>(skipped()) <= max_skip_fraction * sampled;
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

void GradCheckReport::merge(const GradCheckReport& other) {
  tolerance = std::max(tolerance, other.tolerance);
  max_skip_fraction = std::max(max_skip_fraction, other.max_skip_fraction);
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

std::string GradCheckReport::table() const {
  std::size_t w = 6;
  for (const auto& e : entries) w = std::max(w, e.name.size());
  std::string out = fmt::format("{:<{}}  {:<18}  {:>12}  {:>7}  {:>7}  {}\n", "tensor", w, "shape",
                                "max_rel_err", "checked", "skipped", "result");
  for (const auto& e : entries) {
    out += fmt::format("{:<{}}  {:<18}  {:>12.3e}  {:>7}  {:>7}  {}\n", e.name, w, e.shape,
                       e.max_rel_error, e.checked, e.skipped, e.pass ? "ok" : "FAIL");
  }
  out += fmt::format("tolerance {:.1e}  max {:.3e}  checked {}  skipped {} (cap {:.0f}%)  {}\n",
                     tolerance, max_rel_error(), checked(), skipped(), 100 * max_skip_fraction,
                     pass() ? "PASS" : "FAIL");
  return out;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"name", e.name},
                    {"shape", e.shape},
                    {"max_rel_error", e.max_rel_error},
                    {"checked", e.checked},
                    {"skipped", e.skipped},
                    {"pass", e.pass}});
  }
  return {{"tolerance", tolerance},     {"max_skip_fraction", max_skip_fraction},
          {"checked", checked()},       {"skipped", skipped()},
          {"pass", pass()},             {"entries", std::move(rows)}};
}

namespace {

using LossFn = std::function<double()>;

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<std::size_t> pick(std::size_t n, std::int64_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<std::int64_t>(n) <= k) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

GradCheckEntry check_tensor(const std::string& name, Tensor64& value, const Tensor64& analytic,
                            const LossFn& loss, const GradCheckOptions& o,
                            std::mt19937_64& rng) {
  GradCheckEntry e;
  e.name = name;
  e.shape = value.shape().str();
  auto numeric = [&](std::size_t i, double h) {
    const double orig = value[i];
    value[i] = orig + h;
    const double lp = loss();
    value[i] = orig - h;
    const double lm = loss();
    value[i] = orig;
    return (lp - lm) / (2.0 * h);
  };
  for (std::size_t i : pick(value.size(), o.samples_per_tensor, rng)) {
    // Estimates at shrinking steps; keep the one that agrees best with its
    // predecessor. A ReLU/maxpool kink within reach of the step spoils a
    // difference but recedes as the step shrinks. The choice never looks at
    // the analytic value.
    double h = o.step;
    double prev = numeric(i, h);
    double best = prev;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int refine = 0; refine < o.refinements; ++refine) {
      h *= 0.125;
      const double cur = numeric(i, h);
      const double gap = rel_error(prev, cur, o.floor);
      if (gap < best_gap) {
        best_gap = gap;
        best = cur;
      }
      prev = cur;
    }
    if (o.refinements > 0 && best_gap > o.tolerance) {
      ++e.skipped;
      continue;
    }
    ++e.checked;
    e.max_rel_error = std::max(e.max_rel_error, rel_error(analytic[i], best, o.floor));
  }
  e.pass = e.max_rel_error <= o.tolerance;
  return e;
}

double dot(const Tensor64& a, const Tensor64& b) {
  if (a.shape() != b.shape()) throw ShapeError("probe shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Subject {
  std::string name;
  Tensor64 input;
  std::function<Tensor64(const Tensor64&)> forward;
  std::function<Tensor64(const Tensor64&)> backward;
  std::function<void()> zero_grad;
  std::vector<ParamRef<double>> params;
};

// Probe loss L = sum(r * f(x)) with a fixed random r of unit total norm.
GradCheckReport run_subject(Subject& s, const GradCheckOptions& o, std::mt19937_64& rng) {
  const Tensor64 y = s.forward(s.input);
  Tensor64 r(y.shape());
  fill_normal(r, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(y.size())));
  if (s.zero_grad) s.zero_grad();
  const Tensor64 gx = s.backward(r);
  std::vector<Tensor64> grads;
  for (const auto& p : s.params) grads.push_back(*p.grad);

  LossFn loss = [&] { return dot(r, s.forward(s.input)); };
  GradCheckReport rep;
  rep.tolerance = o.tolerance;
  rep.max_skip_fraction = o.max_skip_fraction;
  rep.entries.push_back(check_tensor(s.name + "/input", s.input, gx, loss, o, rng));
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    rep.entries.push_back(
        check_tensor(s.name + "/" + s.params[i].name, *s.params[i].value, grads[i], loss, o, rng));
  }
  return rep;
}

Tensor64 random_tensor(const Shape& shape, std::mt19937_64& rng) {
  Tensor64 t(shape);
  fill_normal(t, rng, 0.0, 1.0);
  return t;
}

void randomize_bn(BatchNormLayer<double>& bn, std::mt19937_64& rng) {
  fill_uniform(bn.params().gamma, rng, 0.5, 1.5);
  fill_uniform(bn.params().beta, rng, -0.5, 0.5);
}

}  // namespace

GradCheckReport grad_check_layers(const GradCheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.max_skip_fraction = o.max_skip_fraction;
  const std::int64_t n = o.batch;

  auto conv_case = [&](const std::string& name, const Conv2dGeometry& g, const Shape& in) {
    auto layer = std::make_shared<Conv2dLayer<double>>(g);
    layer->init(rng);
    if (layer->params().bias) fill_normal(*layer->params().bias, rng, 0.0, 0.5);
    Subject s{name, random_tensor(in, rng),
              [layer](const Tensor64& x) { return layer->forward(x); },
              [layer](const Tensor64& g) { return layer->backward(g); },
              [layer] { layer->zero_grad(); }, {}};
    layer->collect("conv", s.params);
    report.merge(run_subject(s, o, rng));
  };
  conv_case("conv2d_3x3_s2_bias", {3, 4, 3, 3, 2, 1, true}, {n, 2, 3, 7, 7});
  conv_case("conv2d_7x7_s2", {2, 3, 7, 7, 2, 3, false}, {n, 2, 2, 9, 9});
  conv_case("conv2d_1x1", {5, 6, 1, 1, 1, 0, false}, {n, 2, 5, 4, 4});

  for (const Mode mode : {Mode::kTrain, Mode::kEval}) {
    auto bn = std::make_shared<BatchNormLayer<double>>(4);
    randomize_bn(*bn, rng);
    fill_normal(bn->params().running_mean, rng, 0.0, 0.5);
    fill_uniform(bn->params().running_var, rng, 0.5, 2.0);
    Subject s{mode == Mode::kTrain ? "batchnorm_train" : "batchnorm_eval",
              random_tensor({n, 3, 4, 3, 3}, rng),
              [bn, mode](const Tensor64& x) { return bn->forward(x, mode); },
              [bn](const Tensor64& g) { return bn->backward(g); },
              [bn] { bn->zero_grad(); }, {}};
    bn->collect("bn", s.params);
    report.merge(run_subject(s, o, rng));
  }

  {
    auto y = std::make_shared<Tensor64>();
    Subject s{"relu", random_tensor({n, 2, 3, 4, 4}, rng),
              [y](const Tensor64& x) { return *y = relu_forward(x); },
              [y](const Tensor64& g) { return relu_backward(*y, g); }, {}, {}};
    report.merge(run_subject(s, o, rng));
  }
  {
    auto res = std::make_shared<MaxPoolResult<double>>();
    auto shape = std::make_shared<Shape>();
    Subject s{"maxpool_3x3_s2", random_tensor({n, 2, 3, 7, 7}, rng),
              [res, shape](const Tensor64& x) {
                *shape = x.shape();
                *res = maxpool_forward(x);
                return res->y;
              },
              [res, shape](const Tensor64& g) { return maxpool_backward(*shape, res->argmax, g); },
              {}, {}};
    report.merge(run_subject(s, o, rng));
  }
  {
    const Shape in{n, 3, 4, 3, 3};
    Subject s{"global_avg_pool", random_tensor(in, rng),
              [](const Tensor64& x) { return global_avg_pool(x); },
              [in](const Tensor64& g) { return global_avg_pool_backward(in, g); }, {}, {}};
    report.merge(run_subject(s, o, rng));
  }
  {
    auto mask = std::make_shared<Tensor64>();
    const std::uint64_t seed = rng();
    Subject s{"dropout", random_tensor({n, 1, 12, 1, 1}, rng),
              [mask, seed](const Tensor64& x) {
                std::mt19937_64 g(seed);
                return dropout_forward(x, 0.3, Mode::kTrain, g, mask.get());
              },
              [mask](const Tensor64& g) { return dropout_backward(*mask, g); }, {}, {}};
    report.merge(run_subject(s, o, rng));
  }
  {
    auto fc = std::make_shared<LinearLayer<double>>(6, 3);
    fill_normal(fc->params().weight, rng, 0.0, 0.5);
    fill_normal(fc->params().bias, rng, 0.0, 0.5);
    Subject s{"linear", random_tensor({n, 1, 6, 1, 1}, rng),
              [fc](const Tensor64& x) { return fc->forward(x); },
              [fc](const Tensor64& g) { return fc->backward(g); },
              [fc] { fc->zero_grad(); }, {}};
    fc->collect("fc", s.params);
    report.merge(run_subject(s, o, rng));
  }
  {
    const ShuffleSpec spec = ShuffleSpec::make(4, 8);
    Subject a{"video_shuffle", random_tensor({n, 4, 8, 2, 2}, rng),
              [spec](const Tensor64& x) { return video_shuffle(x, spec); },
              [spec](const Tensor64& g) { return shuffle_backward(g, spec); }, {}, {}};
    report.merge(run_subject(a, o, rng));
    const ShuffleSpec grouped = ShuffleSpec::make(4, 6, 2);
    Subject b{"inverse_video_shuffle", random_tensor({n, 4, 6, 2, 2}, rng),
              [grouped](const Tensor64& x) { return inverse_video_shuffle(x, grouped); },
              [grouped](const Tensor64& g) { return video_shuffle(g, grouped); }, {}, {}};
    report.merge(run_subject(b, o, rng));
    const ShiftSpec shift{0.25, 0.25};
    Subject c{"temporal_shift", random_tensor({n, 4, 8, 2, 2}, rng),
              [shift](const Tensor64& x) { return temporal_shift(x, shift); },
              [shift](const Tensor64& g) { return temporal_shift_backward(g, shift); }, {}, {}};
    report.merge(run_subject(c, o, rng));
  }

  for (const BlockVariant v : {BlockVariant::kStandard, BlockVariant::kHeadtail,
                               BlockVariant::kCompact, BlockVariant::kStandardWithShift}) {
    BlockConfig bc;
    bc.variant = v;
    bc.in_channels = 8;
    bc.width = 4;
    bc.stride = 2;
    bc.frames = 4;
    bc.shift = ShiftSpec{0.25, 0.25};
    auto block = std::make_shared<Bottleneck<double>>(bc);
    block->init(rng);
    for (auto* bn : {&block->bn1(), &block->bn2(), &block->bn3(), &block->projection_bn()}) {
      randomize_bn(*bn, rng);
    }
    Subject s{"block_" + std::string(to_string(v)), random_tensor({n, 4, 8, 6, 6}, rng),
              [block](const Tensor64& x) { return block->forward(x, Mode::kTrain); },
              [block](const Tensor64& g) { return block->backward(g); },
              [block] { block->zero_grad(); }, {}};
    block->collect("block", s.params);
    report.merge(run_subject(s, o, rng));
  }
  return report;
}

GradCheckReport grad_check(const NetworkConfig& cfg_in, const GradCheckOptions& o) {
  NetworkConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  cfg.validate();
  std::mt19937_64 rng(o.seed);
  Network<double> net(cfg, o.seed);
  std::vector<ParamRef<double>> params = net.parameters();
  for (const auto& p : params) {
    const std::string& nm = p.name;
    if (nm.ends_with(".gamma")) fill_uniform(*p.value, rng, 0.5, 1.5);
    if (nm.ends_with(".beta")) fill_uniform(*p.value, rng, -0.5, 0.5);
  }
  // Head at unit-variance scale so upstream gradients are not damped by
  // the small training-time init.
  fill_normal(net.head().params().weight, rng, 0.0,
              1.0 / std::sqrt(static_cast<double>(cfg.feature_channels())));

  Tensor64 x = random_tensor(
      {o.batch, cfg.frames, cfg.in_channels, cfg.input_size, cfg.input_size}, rng);
  std::vector<int> labels(static_cast<std::size_t>(o.batch));
  std::uniform_int_distribution<int> pick_label(0, static_cast<int>(cfg.num_classes) - 1);
  for (int& l : labels) l = pick_label(rng);

  const Tensor64 logits = net.forward(x, Mode::kTrain);
  const LossResult<double> lr = cross_entropy(logits, labels);
  net.zero_grad();
  const Tensor64 gx = net.backward(lr.grad_logits);

  LossFn loss = [&] { return cross_entropy(net.forward(x, Mode::kTrain), labels).loss; };
  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.max_skip_fraction = o.max_skip_fraction;
  report.entries.push_back(check_tensor(cfg.name + "/input", x, gx, loss, o, rng));
  for (const auto& p : params) {
    if (!p.trainable) continue;
    const Tensor64 analytic = *p.grad;
    report.entries.push_back(check_tensor(cfg.name + "/" + p.name, *p.value, analytic, loss, o, rng));
  }
  return report;
}

GradCheckReport grad_check_shuffle_probe(const GradCheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  const std::int64_t t = 4;
  const std::int64_t c = 8;
  const ShuffleSpec spec = ShuffleSpec::make(t, c);
  LinearLayer<double> fc(t * c, 3);
  fill_normal(fc.params().weight, rng, 0.0, 0.5);
  fill_normal(fc.params().bias, rng, 0.0, 0.5);
  Tensor64 x = random_tensor({o.batch, t, c, 1, 1}, rng);
  const Tensor64 target = random_tensor({o.batch, 1, 3, 1, 1}, rng);

  auto forward = [&] { return fc.forward(video_shuffle(x, spec)); };
  LossFn loss = [&] {
    const Tensor64 y = forward();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
    return s;
  };
  Tensor64 gy = forward();
  for (std::size_t i = 0; i < gy.size(); ++i) gy[i] -= target[i];
  fc.zero_grad();
  const Tensor64 gx = shuffle_backward(fc.backward(gy), spec);
  std::vector<ParamRef<double>> params;
  fc.collect("fc", params);
  std::vector<Tensor64> grads;
  for (const auto& p : params) grads.push_back(*p.grad);

  GradCheckReport report;
  report.tolerance = o.tolerance;
  report.max_skip_fraction = o.max_skip_fraction;
  report.entries.push_back(check_tensor("shuffle_linear/input", x, gx, loss, o, rng));
  for (std::size_t i = 0; i < params.size(); ++i) {
    report.entries.push_back(
        check_tensor("shuffle_linear/" + params[i].name, *params[i].value, grads[i], loss, o, rng));
  }
  return report;
}

}  // namespace vshuffle
