#include "vshuffle/blocks.hpp"

namespace vshuffle {

void BlockConfig::validate() const {
  if (in_channels < 1 || width < 1 || stride < 1 || expansion < 1 || frames < 1) {
    throw ConfigError("block config has non-positive sizes");
  }
  shift.validate();
  const std::int64_t g = shuffle_groups();
  if (variant == BlockVariant::kCompact && width % g != 0) {
    throw ConfigError("compact block: width " + std::to_string(width) +
                      " not divisible by " + std::to_string(g));
  }
  if (variant == BlockVariant::kHeadtail &&
      (in_channels % g != 0 || out_channels() % g != 0)) {
    throw ConfigError("headtail block: channels " + std::to_string(in_channels) + "/" +
                      std::to_string(out_channels()) + " not divisible by " +
                      std::to_string(g));
  }
}

template <typename S>
Bottleneck<S>::Bottleneck(const BlockConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::int64_t out = cfg.out_channels();
  conv1_ = Conv2dLayer<S>({cfg.in_channels, cfg.width, 1, 1, 1, 0, false});
  conv2_ = Conv2dLayer<S>({cfg.width, cfg.width, 3, 3, cfg.stride, 1, false});
  conv3_ = Conv2dLayer<S>({cfg.width, out, 1, 1, 1, 0, false});
  bn1_ = BatchNormLayer<S>(cfg.width);
  bn2_ = BatchNormLayer<S>(cfg.width);
  bn3_ = BatchNormLayer<S>(out);
  if (cfg.has_projection()) {
    proj_ = Conv2dLayer<S>({cfg.in_channels, out, 1, 1, cfg.stride, 0, false});
    proj_bn_ = BatchNormLayer<S>(out);
  }
}

template <typename S>
ShuffleSpec Bottleneck<S>::head_spec(const Shape& s) const {
  return ShuffleSpec::make(s.t, cfg_.in_channels, cfg_.groups);
}

template <typename S>
ShuffleSpec Bottleneck<S>::mid_spec(const Shape& s) const {
  return ShuffleSpec::make(s.t, cfg_.width, cfg_.groups);
}

template <typename S>
ShuffleSpec Bottleneck<S>::tail_spec(const Shape& s) const {
  return ShuffleSpec::make(s.t, cfg_.out_channels(), cfg_.groups);
}

template <typename S>
Tensor<S> Bottleneck<S>::forward(const Tensor<S>& x, Mode mode) {
  if (x.shape().c != cfg_.in_channels) {
    throw ShapeError("block expects " + std::to_string(cfg_.in_channels) +
                     " channels, got " + std::to_string(x.shape().c));
  }
  if (x.shape().t != cfg_.frames) {
    throw ShapeError("block built for T=" + std::to_string(cfg_.frames) +
                     ", got T=" + std::to_string(x.shape().t));
  }
  const BlockVariant v = cfg_.variant;

  Tensor<S> h;
  if (v == BlockVariant::kStandardWithShift) {
    h = conv1_.forward(temporal_shift(x, cfg_.shift));
  } else if (v == BlockVariant::kHeadtail) {
    h = conv1_.forward(video_shuffle(x, head_spec(x.shape())));
  } else {
    h = conv1_.forward(x);
  }
  r1_ = relu_forward(bn1_.forward(h, mode));

  if (v == BlockVariant::kCompact) {
    const ShuffleSpec mid = mid_spec(r1_.shape());
    h = inverse_video_shuffle(conv2_.forward(video_shuffle(r1_, mid)), mid);
  } else {
    h = conv2_.forward(r1_);
  }
  r2_ = relu_forward(bn2_.forward(h, mode));

  h = bn3_.forward(conv3_.forward(r2_), mode);
  if (v == BlockVariant::kHeadtail) h = inverse_video_shuffle(h, tail_spec(h.shape()));

  if (cfg_.has_projection()) {
    add_inplace(h, proj_bn_.forward(proj_.forward(x), mode));
  } else {
    add_inplace(h, x);
  }
  y_ = relu_forward(h);
  return y_;
}

template <typename S>
Tensor<S> Bottleneck<S>::backward(const Tensor<S>& grad_out) {
  const BlockVariant v = cfg_.variant;
  const Tensor<S> g = relu_backward(y_, grad_out);

  Tensor<S> skip_grad =
      cfg_.has_projection() ? proj_.backward(proj_bn_.backward(g)) : g;

  // The tail applies inverse_video_shuffle, whose adjoint is video_shuffle.
  Tensor<S> gb = v == BlockVariant::kHeadtail ? video_shuffle(g, tail_spec(g.shape())) : g;
  Tensor<S> gr = relu_backward(r2_, conv3_.backward(bn3_.backward(gb)));
  Tensor<S> gm = bn2_.backward(gr);
  if (v == BlockVariant::kCompact) {
    const ShuffleSpec mid = mid_spec(r1_.shape());
    gm = shuffle_backward(conv2_.backward(video_shuffle(gm, mid)), mid);
  } else {
    gm = conv2_.backward(gm);
  }
  Tensor<S> gx = conv1_.backward(bn1_.backward(relu_backward(r1_, gm)));
  if (v == BlockVariant::kHeadtail) {
    gx = shuffle_backward(gx, head_spec(gx.shape()));
  } else if (v == BlockVariant::kStandardWithShift) {
    gx = temporal_shift_backward(gx, cfg_.shift);
  }
  add_inplace(gx, skip_grad);
  return gx;
}

template <typename S>
void Bottleneck<S>::zero_grad() {
  conv1_.zero_grad();
  conv2_.zero_grad();
  conv3_.zero_grad();
  bn1_.zero_grad();
  bn2_.zero_grad();
  bn3_.zero_grad();
  if (cfg_.has_projection()) {
    proj_.zero_grad();
    proj_bn_.zero_grad();
  }
}

template <typename S>
void Bottleneck<S>::collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  conv3_.collect(prefix + ".conv3", out);
  bn3_.collect(prefix + ".bn3", out);
  if (cfg_.has_projection()) {
    proj_.collect(prefix + ".downsample.conv", out);
    proj_bn_.collect(prefix + ".downsample.bn", out);
  }
}

template <typename S>
void Bottleneck<S>::collect_buffers(const std::string& prefix,
                                    std::vector<BufferRef<S>>& out) {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
  bn3_.collect_buffers(prefix + ".bn3", out);
  if (cfg_.has_projection()) proj_bn_.collect_buffers(prefix + ".downsample.bn", out);
}

template <typename S>
void Bottleneck<S>::set_frozen_bn(bool frozen) {
  bn1_.params().frozen = frozen;
  bn2_.params().frozen = frozen;
  bn3_.params().frozen = frozen;
  if (cfg_.has_projection()) proj_bn_.params().frozen = frozen;
}

template class Bottleneck<float>;
template class Bottleneck<double>;

}  // namespace vshuffle
