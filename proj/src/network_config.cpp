#include "vshuffle/network_config.hpp"

#include <array>

namespace vshuffle {

std::string_view to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::kStandard: return "standard";
    case BlockVariant::kHeadtail: return "headtail";
    case BlockVariant::kCompact: return "compact";
    case BlockVariant::kStandardWithShift: return "standard_with_shift";
  }
  return "?";
}

BlockVariant parse_block_variant(std::string_view s) {
  if (s == "standard") return BlockVariant::kStandard;
  if (s == "headtail") return BlockVariant::kHeadtail;
  if (s == "compact") return BlockVariant::kCompact;
  if (s == "standard_with_shift" || s == "shift") return BlockVariant::kStandardWithShift;
  throw ConfigError("unknown block variant '" + std::string(s) + "'");
}

BlockVariant NetworkConfig::variant_at(std::int64_t stage, std::int64_t index) const {
  if (stage < 0 || stage >= static_cast<std::int64_t>(stages.size()) || index < 0 ||
      index >= stages[static_cast<std::size_t>(stage)].blocks) {
    throw ConfigError("no block at (" + std::to_string(stage) + ", " +
                      std::to_string(index) + ")");
  }
  if (auto it = overrides.find({stage, index}); it != overrides.end()) return it->second;
  return index == stages[static_cast<std::size_t>(stage)].blocks - 1 ? last_block
                                                                    : other_blocks;
}

std::int64_t NetworkConfig::count_variant(BlockVariant v) const {
  std::int64_t n = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::int64_t b = 0; b < stages[s].blocks; ++b) {
      if (variant_at(static_cast<std::int64_t>(s), b) == v) ++n;
    }
  }
  return n;
}

std::int64_t NetworkConfig::stage_in_channels(std::size_t stage) const {
  return stage == 0 ? stem_width : stages[stage - 1].width * expansion;
}

std::int64_t NetworkConfig::feature_channels() const {
  return stages.empty() ? stem_width : stages.back().width * expansion;
}

void NetworkConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("network config: " + what);
  };
  need(in_channels >= 1, "in_channels must be >= 1");
  need(stem_width >= 1, "stem width must be >= 1");
  need(expansion >= 1, "expansion must be >= 1");
  need(frames >= 1, "frames must be >= 1");
  need(groups >= 0, "groups must be >= 0");
  need(num_classes >= 1, "classes must be >= 1");
  need(input_size >= 1, "input_size must be >= 1");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  need(!stages.empty(), "at least one stage is required");
  shift.validate();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    need(st.blocks >= 1 && st.width >= 1 && st.stride >= 1,
         "stage " + std::to_string(s) + " has non-positive blocks/width/stride");
  }
  for (const auto& [key, v] : overrides) {
    need(key.first >= 0 && key.first < static_cast<std::int64_t>(stages.size()) &&
             key.second >= 0 &&
             key.second < stages[static_cast<std::size_t>(key.first)].blocks,
         "override for missing block " + std::to_string(key.first) + "." +
             std::to_string(key.second));
  }
  const std::int64_t g = shuffle_groups();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::int64_t b = 0; b < stages[s].blocks; ++b) {
      const BlockVariant v = variant_at(static_cast<std::int64_t>(s), b);
      const std::int64_t in = b == 0 ? stage_in_channels(s) : stages[s].width * expansion;
      const std::int64_t width = stages[s].width;
      const std::int64_t out = width * expansion;
      const std::string where = "block " + std::to_string(s) + "." + std::to_string(b);
      if (v == BlockVariant::kCompact) {
        need(width % g == 0, where + ": compact width " + std::to_string(width) +
                                 " not divisible by " + std::to_string(g) + " groups");
      }
      if (v == BlockVariant::kHeadtail) {
        need(in % g == 0 && out % g == 0,
             where + ": headtail channels " + std::to_string(in) + "/" +
                 std::to_string(out) + " not divisible by " + std::to_string(g) +
                 " groups");
      }
    }
  }
}

namespace {

struct Backbone {
  std::array<std::int64_t, 4> depths;
  std::array<std::int64_t, 4> widths;
  std::int64_t stem;
  std::int64_t frames;
  std::int64_t input;
  std::int64_t in_channels;
  std::int64_t classes;
  double dropout;
};

bool lookup_backbone(std::string_view name, Backbone& out) {
  if (name == "r50") {
    out = {{3, 4, 6, 3}, {64, 128, 256, 512}, 64, 8, 224, 3, 174, 0.8};
  } else if (name == "r101") {
    out = {{3, 4, 23, 3}, {64, 128, 256, 512}, 64, 8, 224, 3, 174, 0.8};
  } else if (name == "toy") {
    out = {{2, 2, 2, 2}, {8, 16, 32, 64}, 8, 8, 32, 3, 174, 0.5};
  } else if (name == "tiny") {
    out = {{2, 2, 2, 2}, {4, 4, 8, 8}, 4, 4, 32, 1, 2, 0.0};
  } else {
    return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> preset_families() {
  return {"tsn", "shift", "compact", "headtail", "vsn", "headtail-vsn"};
}

void apply_family(NetworkConfig& cfg, std::string_view family) {
  using V = BlockVariant;
  if (family == "tsn") {
    cfg.last_block = V::kStandard;
    cfg.other_blocks = V::kStandard;
  } else if (family == "shift") {
    cfg.last_block = V::kStandardWithShift;
    cfg.other_blocks = V::kStandardWithShift;
  } else if (family == "compact") {
    cfg.last_block = V::kCompact;
    cfg.other_blocks = V::kStandard;
  } else if (family == "headtail") {
    cfg.last_block = V::kHeadtail;
    cfg.other_blocks = V::kStandard;
  } else if (family == "vsn") {
    cfg.last_block = V::kCompact;
    cfg.other_blocks = V::kStandardWithShift;
  } else if (family == "headtail-vsn") {
    cfg.last_block = V::kHeadtail;
    cfg.other_blocks = V::kStandardWithShift;
  } else {
    throw ConfigError("unknown network family '" + std::string(family) + "'");
  }
}

NetworkConfig make_preset(std::string_view name) {
  std::string_view family;
  Backbone bb{};
  const auto dash_first = name.find('-');
  const auto dash_last = name.rfind('-');
  if (dash_first != std::string_view::npos &&
      lookup_backbone(name.substr(0, dash_first), bb)) {
    family = name.substr(dash_first + 1);
  } else if (dash_last != std::string_view::npos &&
             lookup_backbone(name.substr(dash_last + 1), bb)) {
    family = name.substr(0, dash_last);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (expected <family>-<r50|r101|toy|tiny>)");
  }
  NetworkConfig cfg;
  cfg.name = std::string(name);
  cfg.in_channels = bb.in_channels;
  cfg.stem_width = bb.stem;
  cfg.frames = bb.frames;
  cfg.num_classes = bb.classes;
  cfg.input_size = bb.input;
  cfg.dropout = bb.dropout;
  for (std::size_t s = 0; s < 4; ++s) {
    cfg.stages.push_back({bb.depths[s], bb.widths[s], s == 0 ? 1 : 2});
  }
  apply_family(cfg, family);
  return cfg;
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network config must be a JSON object");
  NetworkConfig cfg = make_preset(j.value("preset", std::string("vsn-toy")));
  try {
    if (j.contains("frames")) cfg.frames = j.at("frames").get<std::int64_t>();
    if (j.contains("classes")) cfg.num_classes = j.at("classes").get<std::int64_t>();
    if (j.contains("input_size")) cfg.input_size = j.at("input_size").get<std::int64_t>();
    if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels").get<std::int64_t>();
    if (j.contains("groups")) cfg.groups = j.at("groups").get<std::int64_t>();
    if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    if (j.contains("freeze_bn")) cfg.freeze_bn = j.at("freeze_bn").get<bool>();
    if (j.contains("shift_fwd")) cfg.shift.fraction_fwd = j.at("shift_fwd").get<double>();
    if (j.contains("shift_bwd")) cfg.shift.fraction_bwd = j.at("shift_bwd").get<double>();
    if (j.contains("blocks")) {
      for (const auto& [key, value] : j.at("blocks").items()) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) {
          throw ConfigError("block override key '" + key + "' must be 'stage.index'");
        }
        const std::int64_t stage = std::stoll(key.substr(0, dot));
        const std::int64_t index = std::stoll(key.substr(dot + 1));
        cfg.overrides[{stage, index}] = parse_block_variant(value.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(std::string("network config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json network_config_to_json(const NetworkConfig& cfg) {
  nlohmann::json j;
  j["preset"] = cfg.name;
  j["frames"] = cfg.frames;
  j["classes"] = cfg.num_classes;
  j["input_size"] = cfg.input_size;
  j["in_channels"] = cfg.in_channels;
  j["groups"] = cfg.groups;
  j["dropout"] = cfg.dropout;
  j["freeze_bn"] = cfg.freeze_bn;
  j["shift_fwd"] = cfg.shift.fraction_fwd;
  j["shift_bwd"] = cfg.shift.fraction_bwd;
  nlohmann::json blocks = nlohmann::json::object();
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    for (std::int64_t b = 0; b < cfg.stages[s].blocks; ++b) {
      blocks[std::to_string(s) + "." + std::to_string(b)] =
          std::string(to_string(cfg.variant_at(static_cast<std::int64_t>(s), b)));
    }
  }
  j["blocks"] = std::move(blocks);
  return j;
}

}  // namespace vshuffle
