#ifndef VSHUFFLE_TENSOR_HPP
#define VSHUFFLE_TENSOR_HPP

// Dense 5-D video tensor (N, T, C, H, W), row-major with W fastest.
//
// Every per-sample frame x[n, t] is a contiguous [C, H, W] block, so channel
// ranges inside one frame are contiguous as well. Slicing and concatenation
// always copy; there are no aliased views.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vshuffle/error.hpp"

namespace vshuffle {

struct Shape {
  std::int64_t n = 1;
  std::int64_t t = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n * t * c * h * w);
  }
  std::size_t frame_size() const { return static_cast<std::size_t>(c * h * w); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h * w); }
  std::array<std::int64_t, 5> dims() const { return {n, t, c, h, w}; }
  bool valid() const { return n > 0 && t > 0 && c > 0 && h > 0 && w > 0; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Throws ShapeError unless every dimension is positive.
void check_shape(const Shape& s);

template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() : data_(1, S(0)) {}
  explicit Tensor(const Shape& shape) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.numel(), S(0));
  }
  Tensor(const Shape& shape, std::vector<S> values)
      : shape_(shape), data_(std::move(values)) {
    check_shape(shape);
    if (data_.size() != shape.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }
  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  std::size_t offset(std::int64_t n, std::int64_t t, std::int64_t c,
                     std::int64_t h, std::int64_t w) const {
    return static_cast<std::size_t>(
        (((n * shape_.t + t) * shape_.c + c) * shape_.h + h) * shape_.w + w);
  }
  S& at(std::int64_t n, std::int64_t t, std::int64_t c, std::int64_t h,
        std::int64_t w) {
    return data_[offset(n, t, c, h, w)];
  }
  S at(std::int64_t n, std::int64_t t, std::int64_t c, std::int64_t h,
       std::int64_t w) const {
    return data_[offset(n, t, c, h, w)];
  }

  // Start of the contiguous [C, H, W] block for sample n, frame t.
  S* frame(std::int64_t n, std::int64_t t) {
    return data_.data() + offset(n, t, 0, 0, 0);
  }
  const S* frame(std::int64_t n, std::int64_t t) const {
    return data_.data() + offset(n, t, 0, 0, 0);
  }

  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  // Reinterprets the element buffer under a new shape of equal size.
  Tensor reshaped(const Shape& s) const {
    if (s.numel() != data_.size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    }
    return Tensor(s, data_);
  }

 private:
  Shape shape_;
  std::vector<S> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

template <typename S>
Tensor<S> alloc_zeros(const Shape& shape) {
  return Tensor<S>(shape);
}

// Copy of frame `frame`, channels [lo, hi), for every sample: shape (N,1,hi-lo,H,W).
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, std::int64_t frame,
                         std::int64_t lo, std::int64_t hi) {
  const Shape& s = x.shape();
  if (frame < 0 || frame >= s.t) {
    throw ShapeError("frame index " + std::to_string(frame) +
                     " out of range for T=" + std::to_string(s.t));
  }
  if (lo < 0 || lo >= hi || hi > s.c) {
    throw ShapeError("channel range [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + ") invalid for C=" +
                     std::to_string(s.c));
  }
  Tensor<S> out(Shape{s.n, 1, hi - lo, s.h, s.w});
  const std::size_t plane = s.plane_size();
  const std::size_t count = static_cast<std::size_t>(hi - lo) * plane;
  for (std::int64_t n = 0; n < s.n; ++n) {
    const S* src = x.frame(n, frame) + static_cast<std::size_t>(lo) * plane;
    std::copy(src, src + count, out.frame(n, 0));
  }
  return out;
}

// Channel-wise concatenation; parts must agree on N, T, H and W.
template <typename S>
Tensor<S> concat_channels(std::span<const Tensor<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one part");
  const Shape& first = parts.front().shape();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.t != first.t || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: shape " + s.str() +
                       " incompatible with " + first.str());
    }
    channels += s.c;
  }
  Tensor<S> out(Shape{first.n, first.t, channels, first.h, first.w});
  for (std::int64_t n = 0; n < first.n; ++n) {
    for (std::int64_t t = 0; t < first.t; ++t) {
      S* dst = out.frame(n, t);
      for (const auto& p : parts) {
        const std::size_t count = p.shape().frame_size();
        const S* src = p.frame(n, t);
        dst = std::copy(src, src + count, dst);
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  return concat_channels(std::span<const Tensor<S>>(parts));
}

template <typename S>
bool approx_equal(const Tensor<S>& a, const Tensor<S>& b, double tol) {
  if (a.shape() != b.shape()) {
    throw ShapeError("approx_equal: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) <= tol)) {
      return false;
    }
  }
  return true;
}

// Bitwise equality of shape and contents.
template <typename S>
bool identical(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

template <typename S>
double l2_norm(const Tensor<S>& x) {
  double acc = 0.0;
  for (S v : x.values()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <typename S>
std::vector<S> sorted_values(const Tensor<S>& x) {
  std::vector<S> v(x.values().begin(), x.values().end());
  std::sort(v.begin(), v.end());
  return v;
}

template <typename S>
bool all_finite(const Tensor<S>& x) {
  return std::all_of(x.values().begin(), x.values().end(),
                     [](S v) { return std::isfinite(v); });
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
  std::vector<To> v(x.values().begin(), x.values().end());
  return Tensor<To>(x.shape(), std::move(v));
}

template <typename S, typename Rng>
void fill_normal(Tensor<S>& x, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (S& v : x.values()) v = static_cast<S>(dist(rng));
}

template <typename S, typename Rng>
void fill_uniform(Tensor<S>& x, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (S& v : x.values()) v = static_cast<S>(dist(rng));
}

}  // namespace vshuffle

#endif  // VSHUFFLE_TENSOR_HPP
