#ifndef VSHUFFLE_NETWORK_CONFIG_HPP
#define VSHUFFLE_NETWORK_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vshuffle/temporal_ops.hpp"

namespace vshuffle {

enum class BlockVariant { kStandard, kHeadtail, kCompact, kStandardWithShift };

std::string_view to_string(BlockVariant v);
BlockVariant parse_block_variant(std::string_view s);

struct StageSpec {
  std::int64_t blocks = 1;
  std::int64_t width = 64;  // bottleneck width; stage output is width * expansion
  std::int64_t stride = 1;  // applied by the first block of the stage
};

struct NetworkConfig {
  std::string name = "custom";
  std::int64_t in_channels = 3;
  std::int64_t stem_width = 64;
  std::vector<StageSpec> stages;
  std::int64_t expansion = 4;
  std::int64_t frames = 8;
  std::int64_t groups = 0;  // shuffle groups; 0 means frames
  std::int64_t num_classes = 174;
  std::int64_t input_size = 224;
  double dropout = 0.8;
  // Freeze every batchnorm except the one after the stem convolution.
  bool freeze_bn = false;
  ShiftSpec shift;
  // Variant of the last block of each stage and of every other block;
  // per-(stage, index) overrides win over both.
  BlockVariant last_block = BlockVariant::kCompact;
  BlockVariant other_blocks = BlockVariant::kStandardWithShift;
  std::map<std::pair<std::int64_t, std::int64_t>, BlockVariant> overrides;

  std::int64_t shuffle_groups() const { return groups > 0 ? groups : frames; }
  BlockVariant variant_at(std::int64_t stage, std::int64_t index) const;
  std::int64_t count_variant(BlockVariant v) const;
  std::int64_t stage_in_channels(std::size_t stage) const;
  std::int64_t feature_channels() const;
  void validate() const;
};

// Block layouts:
//   tsn           all standard
//   shift         all standard_with_shift
//   compact       last block of each stage compact, others standard
//   headtail      last block of each stage headtail, others standard
//   vsn           last block compact, others standard_with_shift
//   headtail-vsn  last block headtail, others standard_with_shift
// Backbones: r50 (3/4/6/3), r101 (3/4/23/3), toy (widths / 8, 2/2/2/2, 32x32,
// dropout 0.5), tiny (T=4 grad-check scale, 4/4/8/8 widths, 32x32).
// A preset name joins a family and a backbone in either order, e.g.
// "vsn-r50" or "toy-vsn".
NetworkConfig make_preset(std::string_view name);
std::vector<std::string> preset_families();

// Re-applies a family's block layout to an existing config.
void apply_family(NetworkConfig& cfg, std::string_view family);

// Config files are JSON objects. Recognised keys: preset, frames, classes,
// input_size, in_channels, groups, dropout, freeze_bn, shift_fwd, shift_bwd,
// blocks (object mapping "stage.index" to a variant name).
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json network_config_to_json(const NetworkConfig& cfg);

}  // namespace vshuffle

#endif  // VSHUFFLE_NETWORK_CONFIG_HPP
