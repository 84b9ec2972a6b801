#ifndef VSHUFFLE_NETWORK_HPP
#define VSHUFFLE_NETWORK_HPP

// conv1 7x7/2 -> BN -> ReLU -> maxpool 3x3/2 -> res2..res5 -> global average
// pool over (T, H, W) -> dropout -> linear head.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vshuffle/blocks.hpp"
#include "vshuffle/layers.hpp"
#include "vshuffle/network_config.hpp"

namespace vshuffle {

template <typename S>
class Network {
 public:
  explicit Network(const NetworkConfig& cfg, std::uint64_t seed = 0);

  // x is (N, T, C, H, W); returns logits of shape (N, 1, classes, 1, 1).
  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor<S> backward(const Tensor<S>& grad_logits);

  void zero_grad();
  std::vector<ParamRef<S>> parameters();
  std::vector<BufferRef<S>> buffers();
  std::int64_t parameter_count();

  // Re-seeds the dropout mask stream.
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  const NetworkConfig& config() const { return cfg_; }
  std::vector<Bottleneck<S>>& blocks() { return blocks_; }
  const std::vector<std::string>& block_names() const { return block_names_; }
  Conv2dLayer<S>& stem_conv() { return stem_conv_; }
  BatchNormLayer<S>& stem_bn() { return stem_bn_; }
  LinearLayer<S>& head() { return head_; }
  // Last output of the global average pool, (N, 1, features, 1, 1).
  const Tensor<S>& pooled() const { return pooled_; }

 private:
  NetworkConfig cfg_;
  Conv2dLayer<S> stem_conv_;
  BatchNormLayer<S> stem_bn_;
  std::vector<Bottleneck<S>> blocks_;
  std::vector<std::string> block_names_;
  LinearLayer<S> head_;
  std::mt19937_64 dropout_rng_;

  Tensor<S> stem_out_;
  Shape pool_in_shape_;
  std::vector<std::uint32_t> pool_argmax_;
  Shape features_shape_;
  Tensor<S> pooled_;
  Tensor<S> dropout_mask_;
};

// Per-clip output shape (C, T, H, W) after conv1, pool1 and each stage,
// computed arithmetically without allocating weights.
struct StageShape {
  std::string name;
  std::int64_t channels, frames, height, width;
};
std::vector<StageShape> stage_output_shapes(const NetworkConfig& cfg);

}  // namespace vshuffle

#endif  // VSHUFFLE_NETWORK_HPP
