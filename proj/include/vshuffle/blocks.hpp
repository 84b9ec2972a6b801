#ifndef VSHUFFLE_BLOCKS_HPP
#define VSHUFFLE_BLOCKS_HPP

// Bottleneck residual block and its video-shuffle / temporal-shift variants.
//
//   standard             x -> 1x1 -> BN -> ReLU -> 3x3 -> BN -> ReLU -> 1x1 -> BN
//                        (+ skip) -> ReLU
//   headtail             shuffle before the first 1x1, inverse after the last BN
//   compact              shuffle right before the 3x3, inverse right after it
//   standard_with_shift  temporal shift on the residual branch input only; the
//                        skip path sees the unshifted x
//
// The skip path is the identity, or a strided 1x1 projection + BN when the
// stride or channel count changes.

#include <cstdint>
#include <string>
#include <vector>

#include "vshuffle/layers.hpp"
#include "vshuffle/network_config.hpp"
#include "vshuffle/temporal_ops.hpp"

namespace vshuffle {

struct BlockConfig {
  BlockVariant variant = BlockVariant::kStandard;
  std::int64_t in_channels = 64;
  std::int64_t width = 64;
  std::int64_t stride = 1;
  std::int64_t expansion = 4;
  std::int64_t frames = 8;
  std::int64_t groups = 0;  // 0 means frames
  ShiftSpec shift;

  std::int64_t out_channels() const { return width * expansion; }
  bool has_projection() const { return stride != 1 || in_channels != out_channels(); }
  std::int64_t shuffle_groups() const { return groups > 0 ? groups : frames; }
  void validate() const;
};

template <typename S>
class Bottleneck {
 public:
  Bottleneck() = default;
  explicit Bottleneck(const BlockConfig& cfg);

  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  Tensor<S> backward(const Tensor<S>& grad_out);

  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef<S>>& out);
  void set_frozen_bn(bool frozen);

  // Fan-out Gaussian convs, unit BN scales, zero offsets; the last BN scale
  // of the residual branch starts at zero.
  template <typename Rng>
  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (cfg_.has_projection()) proj_.init(rng);
    bn3_.params().gamma.fill(S(0));
  }

  const BlockConfig& config() const { return cfg_; }
  Conv2dLayer<S>& conv1() { return conv1_; }
  Conv2dLayer<S>& conv2() { return conv2_; }
  Conv2dLayer<S>& conv3() { return conv3_; }
  Conv2dLayer<S>& projection() { return proj_; }
  BatchNormLayer<S>& bn1() { return bn1_; }
  BatchNormLayer<S>& bn2() { return bn2_; }
  BatchNormLayer<S>& bn3() { return bn3_; }
  BatchNormLayer<S>& projection_bn() { return proj_bn_; }

 private:
  ShuffleSpec head_spec(const Shape& s) const;
  ShuffleSpec mid_spec(const Shape& s) const;
  ShuffleSpec tail_spec(const Shape& s) const;

  BlockConfig cfg_;
  Conv2dLayer<S> conv1_, conv2_, conv3_, proj_;
  BatchNormLayer<S> bn1_, bn2_, bn3_, proj_bn_;
  Tensor<S> r1_, r2_, y_;
};

}  // namespace vshuffle

#endif  // VSHUFFLE_BLOCKS_HPP
