#ifndef VSHUFFLE_GRADCHECK_HPP
#define VSHUFFLE_GRADCHECK_HPP

// Central finite differences against the analytic backward passes, in
// double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "vshuffle/network_config.hpp"

namespace vshuffle {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double floor = 1e-8;
  // Extra estimates at step/8, step/64, ...; the estimate agreeing best with
  // its predecessor is compared. 0 uses the single step.
  int refinements = 2;
  // Entries sampled per tensor; tensors at or below this size are checked fully.
  std::int64_t samples_per_tensor = 16;
  // Share of sampled entries allowed to be skipped as non-smooth.
  double max_skip_fraction = 0.1;
  std::int64_t batch = 2;
  std::uint64_t seed = 0;

  // Single layers and blocks: step 1e-4, floor 1e-8.
  static GradCheckOptions layers() { return {}; }
  // Whole networks: a smaller step keeps the many ReLU kinks out of reach,
  // and the floor sits above the ~1e-9 rounding noise of the deeper loss,
  // which structurally zero gradients (e.g. the stem BN offset, cancelled by
  // the next batch-statistics BN) would otherwise turn into large ratios.
  static GradCheckOptions network() {
    GradCheckOptions o;
    o.step = 1e-5;
    o.floor = 1e-5;
    o.refinements = 1;
    return o;
  }
  // Shuffle + linear probe: exact differences, so a single large step.
  static GradCheckOptions probe() {
    GradCheckOptions o;
    o.tolerance = 1e-10;
    o.step = 1e-2;
    o.refinements = 0;
    o.samples_per_tensor = 64;
    return o;
  }
};

struct GradCheckEntry {
  std::string name;   // "<subject>/<tensor>"
  std::string shape;
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  // Entries whose finite difference keeps straddling a ReLU/maxpool kink
  // (estimates at successively smaller steps disagree); excluded from the error.
  std::int64_t skipped = 0;
  bool pass = true;  // every checked entry within tolerance
};

struct GradCheckReport {
  double tolerance = 0.0;
  double max_skip_fraction = 0.0;
  std::vector<GradCheckEntry> entries;

  // Every entry passes and skipped entries stay within max_skip_fraction.
  bool pass() const;
  std::int64_t checked() const;
  std::int64_t skipped() const;
  double max_rel_error() const;
  void merge(const GradCheckReport& other);
  std::string table() const;
  nlohmann::json to_json() const;
};

// Whole network (dropout off, BN in batch-statistics mode with randomized
// scales and offsets) under softmax cross-entropy. Intended for tiny
// configurations (<= 1e4 parameters).
GradCheckReport grad_check(const NetworkConfig& cfg,
                           const GradCheckOptions& opts = GradCheckOptions::network());

// Every layer type in isolation plus one bottleneck per block variant,
// each under a random linear probe loss.
GradCheckReport grad_check_layers(const GradCheckOptions& opts = GradCheckOptions::layers());

// x -> video shuffle -> linear head under a squared-error loss. Every
// finite difference is exact up to rounding, so this holds at ~1e-10.
GradCheckReport grad_check_shuffle_probe(
    const GradCheckOptions& opts = GradCheckOptions::probe());

}  // namespace vshuffle

#endif  // VSHUFFLE_GRADCHECK_HPP
