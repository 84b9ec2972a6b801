#include "vshuffle/temporal_ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace vshuffle {

ShuffleSpec ShuffleSpec::make(std::int64_t t_frames, std::int64_t channels,
                              std::int64_t groups) {
  ShuffleSpec s;
  s.t_frames = t_frames;
  s.channels = channels;
  s.groups = groups > 0 ? groups : t_frames;
  if (s.t_frames < 1 || s.channels < 1) {
    throw ConfigError("shuffle needs positive T and C");
  }
  if (s.channels % s.groups != 0) {
    throw ConfigError("video shuffle: C=" + std::to_string(channels) +
                      " not divisible by groups=" + std::to_string(s.groups));
  }
  s.eta = s.channels / s.groups;
  return s;
}

void ShuffleSpec::validate() const {
  if (t_frames < 1 || channels < 1 || groups < 1 || eta < 1 ||
      channels != groups * eta) {
    throw ConfigError("inconsistent ShuffleSpec: T=" + std::to_string(t_frames) +
                      " C=" + std::to_string(channels) +
                      " groups=" + std::to_string(groups) +
                      " eta=" + std::to_string(eta));
  }
}

namespace {

void check_against(const Shape& s, const ShuffleSpec& spec) {
  spec.validate();
  if (s.t != spec.t_frames) {
    throw ShapeError("video shuffle: tensor has T=" + std::to_string(s.t) +
                     ", spec expects " + std::to_string(spec.t_frames));
  }
  if (s.c != spec.channels) {
    throw ShapeError("video shuffle: tensor has C=" + std::to_string(s.c) +
                     ", spec expects " + std::to_string(spec.channels));
  }
}

// Block (frame t, group g) of the input lands at flat block g*T + t of the
// output, i.e. output frame (g*T + t) / G, slot (g*T + t) % G.
template <typename S, bool kInverse>
Tensor<S> permute_blocks(const Tensor<S>& x, const ShuffleSpec& spec) {
  check_against(x.shape(), spec);
  const Shape& s = x.shape();
  Tensor<S> out(s);
  const std::int64_t T = spec.t_frames;
  const std::int64_t G = spec.groups;
  const std::size_t block = static_cast<std::size_t>(spec.eta) * s.plane_size();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t t = 0; t < T; ++t) {
      for (std::int64_t g = 0; g < G; ++g) {
        const std::int64_t k = g * T + t;
        const std::int64_t ot = k / G;
        const std::int64_t og = k % G;
        const S* src;
        S* dst;
        if constexpr (kInverse) {
          src = x.frame(n, ot) + static_cast<std::size_t>(og) * block;
          dst = out.frame(n, t) + static_cast<std::size_t>(g) * block;
        } else {
          src = x.frame(n, t) + static_cast<std::size_t>(g) * block;
          dst = out.frame(n, ot) + static_cast<std::size_t>(og) * block;
        }
        std::copy(src, src + block, dst);
      }
    }
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> video_shuffle(const Tensor<S>& x, const ShuffleSpec& spec) {
  return permute_blocks<S, false>(x, spec);
}

template <typename S>
Tensor<S> inverse_video_shuffle(const Tensor<S>& x, const ShuffleSpec& spec) {
  return permute_blocks<S, true>(x, spec);
}

ShuffleSource shuffle_source(const ShuffleSpec& spec, std::int64_t frame,
                             std::int64_t channel) {
  spec.validate();
  const std::int64_t slot = channel / spec.eta;
  const std::int64_t r = channel % spec.eta;
  const std::int64_t k = frame * spec.groups + slot;
  const std::int64_t src_group = k / spec.t_frames;
  const std::int64_t src_frame = k % spec.t_frames;
  return {src_frame, src_group * spec.eta + r};
}

void ShiftSpec::validate() const {
  auto ok = [](double f) { return std::isfinite(f) && f >= 0.0 && f <= 1.0; };
  if (!ok(fraction_fwd) || !ok(fraction_bwd) ||
      fraction_fwd + fraction_bwd > 1.0) {
    throw ConfigError("temporal shift fractions must lie in [0, 1] and sum to at most 1; got " +
                      std::to_string(fraction_fwd) + ", " +
                      std::to_string(fraction_bwd));
  }
}

std::int64_t ShiftSpec::forward_channels(std::int64_t c) const {
  return static_cast<std::int64_t>(std::floor(fraction_fwd * static_cast<double>(c)));
}

std::int64_t ShiftSpec::backward_channels(std::int64_t c) const {
  return static_cast<std::int64_t>(std::floor(fraction_bwd * static_cast<double>(c)));
}

namespace {

// dir_a applies to the first block of channels, dir_b to the second; +1 means
// frame t reads frame t-1, -1 means frame t reads frame t+1.
template <typename S>
Tensor<S> shift_impl(const Tensor<S>& x, const ShiftSpec& spec, int dir_a,
                     int dir_b) {
  spec.validate();
  const Shape& s = x.shape();
  const std::int64_t na = spec.forward_channels(s.c);
  const std::int64_t nb = spec.backward_channels(s.c);
  if (na + nb > s.c) throw ConfigError("temporal shift moves more than C channels");
  Tensor<S> out(s);
  const std::size_t plane = s.plane_size();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t t = 0; t < s.t; ++t) {
      S* dst = out.frame(n, t);
      auto copy_range = [&](std::int64_t c0, std::int64_t c1, int dir) {
        if (c1 <= c0) return;
        const std::int64_t src_t = t - dir;
        if (src_t < 0 || src_t >= s.t) return;  // zero padding
        const S* src = x.frame(n, src_t) + static_cast<std::size_t>(c0) * plane;
        std::copy(src, src + static_cast<std::size_t>(c1 - c0) * plane,
                  dst + static_cast<std::size_t>(c0) * plane);
      };
      copy_range(0, na, dir_a);
      copy_range(na, na + nb, dir_b);
      copy_range(na + nb, s.c, 0);
    }
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> temporal_shift(const Tensor<S>& x, const ShiftSpec& spec) {
  return shift_impl(x, spec, +1, -1);
}

template <typename S>
Tensor<S> temporal_shift_backward(const Tensor<S>& grad_out, const ShiftSpec& spec) {
  return shift_impl(grad_out, spec, -1, +1);
}

std::vector<std::int64_t> segment_sample(const SamplerSpec& spec) {
  if (spec.num_segments < 1) throw ConfigError("num_segments must be >= 1");
  if (spec.total_frames < 1) throw ConfigError("total_frames must be >= 1");
  const std::int64_t total = spec.total_frames;
  const std::int64_t segs = spec.num_segments;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(segs));
  if (total < segs) {
    const std::int64_t reps = segs / total;
    const std::int64_t extra = segs % total;
    for (std::int64_t f = 0; f < total; ++f) {
      const std::int64_t count = reps + (f >= total - extra ? 1 : 0);
      out.insert(out.end(), static_cast<std::size_t>(count), f);
    }
    return out;
  }
  const std::int64_t base = total / segs;
  const std::int64_t rem = total % segs;
  std::mt19937_64 rng(spec.seed);
  for (std::int64_t k = 0; k < segs; ++k) {
    const std::int64_t lo = k * base + std::min(k, rem);
    const std::int64_t hi = lo + base + (k < rem ? 1 : 0);
    if (spec.mode == SampleMode::kEvalCenter) {
      out.push_back((lo + hi) / 2);
    } else {
      std::uniform_int_distribution<std::int64_t> pick(lo, hi - 1);
      out.push_back(pick(rng));
    }
  }
  return out;
}

template Tensor<float> video_shuffle(const Tensor<float>&, const ShuffleSpec&);
template Tensor<double> video_shuffle(const Tensor<double>&, const ShuffleSpec&);
template Tensor<float> inverse_video_shuffle(const Tensor<float>&, const ShuffleSpec&);
template Tensor<double> inverse_video_shuffle(const Tensor<double>&, const ShuffleSpec&);
template Tensor<float> temporal_shift(const Tensor<float>&, const ShiftSpec&);
template Tensor<double> temporal_shift(const Tensor<double>&, const ShiftSpec&);
template Tensor<float> temporal_shift_backward(const Tensor<float>&, const ShiftSpec&);
template Tensor<double> temporal_shift_backward(const Tensor<double>&, const ShiftSpec&);

}  // namespace vshuffle
