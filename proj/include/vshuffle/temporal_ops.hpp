#ifndef VSHUFFLE_TEMPORAL_OPS_HPP
#define VSHUFFLE_TEMPORAL_OPS_HPP

// Parameter-free temporal operators: video shuffle and its inverse, the
// zero-padded temporal shift, and sparse segment sampling.

#include <cstdint>
#include <vector>

#include "vshuffle/tensor.hpp"

namespace vshuffle {

// Channel grouping for video shuffle. Each frame's C channels are cut into
// `groups` groups of `eta` channels; the shuffle is the transpose of the
// (frame, group) block grid, with the result re-read in (frame, group) order.
struct ShuffleSpec {
  std::int64_t t_frames = 1;
  std::int64_t channels = 1;
  std::int64_t groups = 1;
  std::int64_t eta = 1;

  // groups <= 0 selects the default, groups == t_frames.
  static ShuffleSpec make(std::int64_t t_frames, std::int64_t channels,
                          std::int64_t groups = 0);
  static ShuffleSpec for_shape(const Shape& s, std::int64_t groups = 0) {
    return make(s.t, s.c, groups);
  }
  void validate() const;
};

template <typename S>
Tensor<S> video_shuffle(const Tensor<S>& x, const ShuffleSpec& spec);

template <typename S>
Tensor<S> inverse_video_shuffle(const Tensor<S>& x, const ShuffleSpec& spec);

// Gradient of video_shuffle: the transpose of a permutation is its inverse.
template <typename S>
Tensor<S> shuffle_backward(const Tensor<S>& grad_out, const ShuffleSpec& spec) {
  return inverse_video_shuffle(grad_out, spec);
}

// Source channel/frame for output position (frame, channel) of video_shuffle.
struct ShuffleSource {
  std::int64_t frame;
  std::int64_t channel;
};
ShuffleSource shuffle_source(const ShuffleSpec& spec, std::int64_t frame,
                             std::int64_t channel);

// Temporal shift with zero padding. The first floor(fraction_fwd * C)
// channels move one frame forward in time (frame t receives frame t-1); the
// next floor(fraction_bwd * C) channels move one frame backward.
struct ShiftSpec {
  double fraction_fwd = 0.125;
  double fraction_bwd = 0.125;

  void validate() const;
  std::int64_t forward_channels(std::int64_t c) const;
  std::int64_t backward_channels(std::int64_t c) const;
};

template <typename S>
Tensor<S> temporal_shift(const Tensor<S>& x, const ShiftSpec& spec);

template <typename S>
Tensor<S> temporal_shift_backward(const Tensor<S>& grad_out, const ShiftSpec& spec);

enum class SampleMode { kTrainRandom, kEvalCenter };

struct SamplerSpec {
  std::int64_t total_frames = 1;
  std::int64_t num_segments = 8;
  SampleMode mode = SampleMode::kEvalCenter;
  std::uint64_t seed = 0;
};

// One frame index per segment; non-decreasing, each < total_frames.
//
// Frames are split into num_segments spans of floor(total/segments) frames,
// the first (total % segments) spans taking one extra frame. Evaluation
// picks floor((lo + hi) / 2) of each half-open span [lo, hi); training draws
// uniformly inside the span. When total_frames < num_segments each frame is
// repeated floor(segments/total) times and the trailing
// (segments % total) frames once more.
std::vector<std::int64_t> segment_sample(const SamplerSpec& spec);

}  // namespace vshuffle

#endif  // VSHUFFLE_TEMPORAL_OPS_HPP
