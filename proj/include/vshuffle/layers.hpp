#ifndef VSHUFFLE_LAYERS_HPP
#define VSHUFFLE_LAYERS_HPP

// Frame-wise 2D CNN layers with hand-written backward passes.
//
// Spatial layers treat a (N, T, C, H, W) tensor as N*T independent [C, H, W]
// frames. Parameter tensors reuse the 5-D shape: a conv weight
// (out, in, kh, kw) is stored as Shape{out, 1, in, kh, kw}; per-channel
// vectors as Shape{1, 1, C, 1, 1}.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vshuffle/tensor.hpp"

namespace vshuffle {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------- conv2d

struct Conv2dGeometry {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  bool bias = false;

  std::int64_t out_h(std::int64_t h) const;
  std::int64_t out_w(std::int64_t w) const;
  std::int64_t weight_count() const {
    return out_channels * in_channels * kernel_h * kernel_w;
  }
  Shape weight_shape() const {
    return Shape{out_channels, 1, in_channels, kernel_h, kernel_w};
  }
};

template <typename S>
struct Conv2dParams {
  Conv2dGeometry geom;
  Tensor<S> weight;
  std::optional<Tensor<S>> bias;

  static Conv2dParams make(const Conv2dGeometry& g);
};

template <typename S>
struct Conv2dGrads {
  Tensor<S> grad_x;
  Tensor<S> grad_w;
  std::optional<Tensor<S>> grad_b;
};

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Conv2dParams<S>& p);

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& x, const Conv2dParams<S>& p,
                               const Tensor<S>& grad_out);

// ------------------------------------------------------------- batchnorm

template <typename S>
struct BatchNormParams {
  Tensor<S> gamma;
  Tensor<S> beta;
  Tensor<S> running_mean;
  Tensor<S> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  // Frozen layers normalise with running statistics in every mode.
  bool frozen = false;

  static BatchNormParams make(std::int64_t channels);
  std::int64_t channels() const { return gamma.shape().c; }
};

template <typename S>
struct BatchNormCache {
  Tensor<S> xhat;
  std::vector<double> inv_std;
  bool batch_stats = false;
};

template <typename S>
struct BatchNormGrads {
  Tensor<S> grad_x;
  Tensor<S> grad_gamma;
  Tensor<S> grad_beta;
};

// Batch statistics are used only in kTrain mode on non-frozen layers, in
// which case the running statistics are updated (unbiased variance).
template <typename S>
Tensor<S> batchnorm_forward(const Tensor<S>& x, BatchNormParams<S>& p, Mode mode,
                            BatchNormCache<S>* cache = nullptr);

template <typename S>
BatchNormGrads<S> batchnorm_backward(const Tensor<S>& grad_out,
                                     const BatchNormParams<S>& p,
                                     const BatchNormCache<S>& cache);

// ------------------------------------------------------------------ relu

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x);

// `y` is the forward output.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& y, const Tensor<S>& grad_out);

// --------------------------------------------------------------- maxpool

struct PoolGeometry {
  std::int64_t kernel = 3;
  std::int64_t stride = 2;
  std::int64_t padding = 1;

  std::int64_t out_size(std::int64_t in) const;
};

template <typename S>
struct MaxPoolResult {
  Tensor<S> y;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

template <typename S>
MaxPoolResult<S> maxpool_forward(const Tensor<S>& x, const PoolGeometry& g = {});

template <typename S>
Tensor<S> maxpool_backward(const Shape& input_shape,
                           const std::vector<std::uint32_t>& argmax,
                           const Tensor<S>& grad_out);

// ------------------------------------------------------- global avg pool

// Averages over T, H and W jointly: (N, T, C, H, W) -> (N, 1, C, 1, 1).
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x);

template <typename S>
Tensor<S> global_avg_pool_backward(const Shape& input_shape, const Tensor<S>& grad_out);

// --------------------------------------------------------------- dropout

// Inverted dropout with drop probability `rate`; identity in kEval mode or
// when rate == 0. The sampled keep-mask (already scaled) is returned via `mask`.
template <typename S>
Tensor<S> dropout_forward(const Tensor<S>& x, double rate, Mode mode,
                          std::mt19937_64& rng, Tensor<S>* mask);

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& mask, const Tensor<S>& grad_out);

// ---------------------------------------------------------------- linear

template <typename S>
struct LinearParams {
  std::int64_t in_features = 1;
  std::int64_t out_features = 1;
  Tensor<S> weight;  // Shape{out, 1, in, 1, 1}
  Tensor<S> bias;    // Shape{1, 1, out, 1, 1}

  static LinearParams make(std::int64_t in, std::int64_t out);
};

template <typename S>
struct LinearGrads {
  Tensor<S> grad_x;
  Tensor<S> grad_w;
  Tensor<S> grad_b;
};

// Flattens each sample of x to in_features values; output (N, 1, out, 1, 1).
template <typename S>
Tensor<S> linear_forward(const Tensor<S>& x, const LinearParams<S>& p);

template <typename S>
LinearGrads<S> linear_backward(const Tensor<S>& x, const LinearParams<S>& p,
                               const Tensor<S>& grad_out);

// ---------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
void add_inplace(Tensor<S>& acc, const Tensor<S>& b);

// --------------------------------------------------- stateful wrappers

// Named handle onto a parameter and its accumulated gradient.
template <typename S>
struct ParamRef {
  std::string name;
  Tensor<S>* value;
  Tensor<S>* grad;
  bool decay;      // receives weight decay
  bool trainable;  // updated by the optimizer
};

// Named non-trainable state (batchnorm running statistics).
template <typename S>
struct BufferRef {
  std::string name;
  Tensor<S>* value;
};

template <typename S>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  explicit Conv2dLayer(const Conv2dGeometry& g);

  Tensor<S> forward(const Tensor<S>& x);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out);
  // Fan-out scaled Gaussian: std = sqrt(2 / (out * kh * kw)).
  template <typename Rng>
  void init(Rng& rng) {
    const double fan_out = static_cast<double>(params_.geom.out_channels *
                                               params_.geom.kernel_h *
                                               params_.geom.kernel_w);
    fill_normal(params_.weight, rng, 0.0, std::sqrt(2.0 / fan_out));
    if (params_.bias) params_.bias->fill(S(0));
  }

  Conv2dParams<S>& params() { return params_; }
  const Conv2dParams<S>& params() const { return params_; }
  const Tensor<S>& grad_w() const { return grad_w_; }

 private:
  Conv2dParams<S> params_;
  Tensor<S> grad_w_;
  std::optional<Tensor<S>> grad_b_;
  Tensor<S> input_;
};

template <typename S>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(std::int64_t channels);

  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef<S>>& out);

  BatchNormParams<S>& params() { return params_; }
  const BatchNormParams<S>& params() const { return params_; }

 private:
  BatchNormParams<S> params_;
  Tensor<S> grad_gamma_;
  Tensor<S> grad_beta_;
  BatchNormCache<S> cache_;
};

template <typename S>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(std::int64_t in, std::int64_t out);

  Tensor<S> forward(const Tensor<S>& x);
  Tensor<S> backward(const Tensor<S>& grad_out);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out);
  template <typename Rng>
  void init(Rng& rng) {
    fill_normal(params_.weight, rng, 0.0, 0.01);
    params_.bias.fill(S(0));
  }

  LinearParams<S>& params() { return params_; }
  const LinearParams<S>& params() const { return params_; }

 private:
  LinearParams<S> params_;
  Tensor<S> grad_w_;
  Tensor<S> grad_b_;
  Tensor<S> input_;
};

}  // namespace vshuffle

#endif  // VSHUFFLE_LAYERS_HPP
