#include "vshuffle/network.hpp"

namespace vshuffle {
namespace {

Conv2dGeometry stem_geometry(const NetworkConfig& cfg) {
  return {cfg.in_channels, cfg.stem_width, 7, 7, 2, 3, false};
}

}  // namespace

template <typename S>
Network<S>::Network(const NetworkConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), dropout_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  stem_conv_ = Conv2dLayer<S>(stem_geometry(cfg_));
  stem_bn_ = BatchNormLayer<S>(cfg_.stem_width);
  std::int64_t in = cfg_.stem_width;
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const StageSpec& st = cfg_.stages[s];
    for (std::int64_t b = 0; b < st.blocks; ++b) {
      BlockConfig bc;
      bc.variant = cfg_.variant_at(static_cast<std::int64_t>(s), b);
      bc.in_channels = in;
      bc.width = st.width;
      bc.stride = b == 0 ? st.stride : 1;
      bc.expansion = cfg_.expansion;
      bc.frames = cfg_.frames;
      bc.groups = cfg_.groups;
      bc.shift = cfg_.shift;
      blocks_.emplace_back(bc);
      blocks_.back().set_frozen_bn(cfg_.freeze_bn);
      block_names_.push_back("res" + std::to_string(s + 2) + "." + std::to_string(b));
      in = bc.out_channels();
    }
  }
  head_ = LinearLayer<S>(in, cfg_.num_classes);

  std::mt19937_64 rng(seed);
  stem_conv_.init(rng);
  for (auto& b : blocks_) b.init(rng);
  head_.init(rng);
}

template <typename S>
Tensor<S> Network<S>::forward(const Tensor<S>& x, Mode mode) {
  const Shape& s = x.shape();
  if (s.t != cfg_.frames || s.c != cfg_.in_channels) {
    throw ShapeError("network expects T=" + std::to_string(cfg_.frames) +
                     ", C=" + std::to_string(cfg_.in_channels) + ", got " + s.str());
  }
  stem_out_ = relu_forward(stem_bn_.forward(stem_conv_.forward(x), mode));
  pool_in_shape_ = stem_out_.shape();
  MaxPoolResult<S> pooled = maxpool_forward(stem_out_);
  pool_argmax_ = std::move(pooled.argmax);
  Tensor<S> h = std::move(pooled.y);
  for (auto& b : blocks_) h = b.forward(h, mode);
  features_shape_ = h.shape();
  pooled_ = global_avg_pool(h);
  Tensor<S> d = dropout_forward(pooled_, cfg_.dropout, mode, dropout_rng_, &dropout_mask_);
  return head_.forward(d);
}

template <typename S>
Tensor<S> Network<S>::backward(const Tensor<S>& grad_logits) {
  Tensor<S> g = dropout_backward(dropout_mask_, head_.backward(grad_logits));
  g = global_avg_pool_backward(features_shape_, g);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  g = maxpool_backward(pool_in_shape_, pool_argmax_, g);
  g = relu_backward(stem_out_, g);
  return stem_conv_.backward(stem_bn_.backward(g));
}

template <typename S>
void Network<S>::zero_grad() {
  stem_conv_.zero_grad();
  stem_bn_.zero_grad();
  for (auto& b : blocks_) b.zero_grad();
  head_.zero_grad();
}

template <typename S>
std::vector<ParamRef<S>> Network<S>::parameters() {
  std::vector<ParamRef<S>> out;
  stem_conv_.collect("conv1", out);
  stem_bn_.collect("bn1", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(block_names_[i], out);
  head_.collect("fc", out);
  return out;
}

template <typename S>
std::vector<BufferRef<S>> Network<S>::buffers() {
  std::vector<BufferRef<S>> out;
  stem_bn_.collect_buffers("bn1", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect_buffers(block_names_[i], out);
  }
  return out;
}

template <typename S>
std::int64_t Network<S>::parameter_count() {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::int64_t>(p.value->size());
  return n;
}

std::vector<StageShape> stage_output_shapes(const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<StageShape> out;
  const Conv2dGeometry stem = stem_geometry(cfg);
  std::int64_t h = stem.out_h(cfg.input_size);
  std::int64_t w = stem.out_w(cfg.input_size);
  out.push_back({"conv1", cfg.stem_width, cfg.frames, h, w});
  const PoolGeometry pool;
  h = pool.out_size(h);
  w = pool.out_size(w);
  out.push_back({"pool1", cfg.stem_width, cfg.frames, h, w});
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const Conv2dGeometry g{1, 1, 3, 3, cfg.stages[s].stride, 1, false};
    h = g.out_h(h);
    w = g.out_w(w);
    out.push_back({"res" + std::to_string(s + 2), cfg.stages[s].width * cfg.expansion,
                   cfg.frames, h, w});
  }
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace vshuffle
