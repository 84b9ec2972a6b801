#ifndef VSHUFFLE_COST_HPP
#define VSHUFFLE_COST_HPP

// Exact parameter and multiply-add accounting derived from a NetworkConfig
// alone (no weights are allocated).
//
// Conventions:
//   conv     madds = out_h * out_w * out_c * in_c * k_h * k_w per frame,
//            summed over the T frames of one clip (N = 1)
//   linear   madds = in * out per clip
//   headline FLOPs = conv + linear madds (one multiply-add counted as one
//            FLOP); `ops_2x` doubles that for a separate-ops reading
//   aux      batchnorm 1/element, relu 1/element, residual add 1/element,
//            max pool k*k/output, average pool 1/input element; listed per
//            layer but excluded from the headline
//   shuffle and shift rows are data movement: 0 params, 0 madds, 0 aux

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "vshuffle/network_config.hpp"
#include "vshuffle/tensor.hpp"

namespace vshuffle {

struct CostEntry {
  std::string name;
  std::string kind;
  std::int64_t params = 0;
  std::int64_t madds = 0;
  std::int64_t aux_ops = 0;
};

struct CostReport {
  std::string config_name;
  Shape input;
  std::vector<CostEntry> entries;
  std::int64_t total_params = 0;
  std::int64_t total_madds = 0;
  std::int64_t total_aux_ops = 0;

  std::int64_t flops() const { return total_madds; }
  std::int64_t ops_2x() const { return 2 * total_madds; }

  // Aligned per-layer table followed by a totals line.
  std::string table(bool per_layer = true) const;
  nlohmann::json to_json() const;
};

CostReport count_flops(const NetworkConfig& cfg, const Shape& input);
// Clip input (1, T, in_channels, input_size, input_size).
CostReport count_params(const NetworkConfig& cfg);

}  // namespace vshuffle

#endif  // VSHUFFLE_COST_HPP
