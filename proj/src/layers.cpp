#include "vshuffle/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"

namespace vshuffle {

// ---------------------------------------------------------------- conv2d

std::int64_t Conv2dGeometry::out_h(std::int64_t h) const {
  const std::int64_t padded = h + 2 * padding;
  if (padded < kernel_h) {
    throw ShapeError("conv kernel height " + std::to_string(kernel_h) +
                     " exceeds padded input " + std::to_string(padded));
  }
  return (padded - kernel_h) / stride + 1;
}

std::int64_t Conv2dGeometry::out_w(std::int64_t w) const {
  const std::int64_t padded = w + 2 * padding;
  if (padded < kernel_w) {
    throw ShapeError("conv kernel width " + std::to_string(kernel_w) +
                     " exceeds padded input " + std::to_string(padded));
  }
  return (padded - kernel_w) / stride + 1;
}

template <typename S>
Conv2dParams<S> Conv2dParams<S>::make(const Conv2dGeometry& g) {
  if (g.in_channels < 1 || g.out_channels < 1 || g.kernel_h < 1 ||
      g.kernel_w < 1 || g.stride < 1 || g.padding < 0) {
    throw ConfigError("invalid conv geometry");
  }
  Conv2dParams p;
  p.geom = g;
  p.weight = Tensor<S>(g.weight_shape());
  if (g.bias) p.bias = Tensor<S>(Shape{1, 1, g.out_channels, 1, 1});
  return p;
}

namespace {

struct ConvDims {
  std::int64_t frames, c, h, w, oh, ow, k, m, p;
};

ConvDims conv_dims(const Shape& s, const Conv2dGeometry& g) {
  if (s.c != g.in_channels) {
    throw ShapeError("conv expects " + std::to_string(g.in_channels) +
                     " input channels, got " + std::to_string(s.c));
  }
  ConvDims d;
  d.frames = s.n * s.t;
  d.c = s.c;
  d.h = s.h;
  d.w = s.w;
  d.oh = g.out_h(s.h);
  d.ow = g.out_w(s.w);
  d.k = g.in_channels * g.kernel_h * g.kernel_w;
  d.p = d.oh * d.ow;
  d.m = d.frames * d.p;
  return d;
}

// col is (K x M): row (c, i, j), column (frame, oh, ow).
template <typename S>
void im2col(const S* x, const ConvDims& d, const Conv2dGeometry& g, S* col) {
  for (std::int64_t c = 0; c < d.c; ++c) {
    for (std::int64_t i = 0; i < g.kernel_h; ++i) {
      for (std::int64_t j = 0; j < g.kernel_w; ++j) {
        S* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * d.m;
        for (std::int64_t f = 0; f < d.frames; ++f) {
          const S* plane = x + (f * d.c + c) * d.h * d.w;
          for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            S* dst = row + f * d.p + oh * d.ow;
            const std::int64_t ih = oh * g.stride - g.padding + i;
            if (ih < 0 || ih >= d.h) {
              std::fill(dst, dst + d.ow, S(0));
              continue;
            }
            const S* src = plane + ih * d.w;
            for (std::int64_t ow = 0; ow < d.ow; ++ow) {
              const std::int64_t iw = ow * g.stride - g.padding + j;
              dst[ow] = (iw >= 0 && iw < d.w) ? src[iw] : S(0);
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* col, const ConvDims& d, const Conv2dGeometry& g, S* x) {
  for (std::int64_t c = 0; c < d.c; ++c) {
    for (std::int64_t i = 0; i < g.kernel_h; ++i) {
      for (std::int64_t j = 0; j < g.kernel_w; ++j) {
        const S* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * d.m;
        for (std::int64_t f = 0; f < d.frames; ++f) {
          S* plane = x + (f * d.c + c) * d.h * d.w;
          for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            const std::int64_t ih = oh * g.stride - g.padding + i;
            if (ih < 0 || ih >= d.h) continue;
            const S* src = row + f * d.p + oh * d.ow;
            S* dst = plane + ih * d.w;
            for (std::int64_t ow = 0; ow < d.ow; ++ow) {
              const std::int64_t iw = ow * g.stride - g.padding + j;
              if (iw >= 0 && iw < d.w) dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Conv2dParams<S>& p) {
  const Conv2dGeometry& g = p.geom;
  const ConvDims d = conv_dims(x.shape(), g);
  std::vector<S> col(static_cast<std::size_t>(d.k * d.m));
  im2col(x.data(), d, g, col.data());
  std::vector<S> y(static_cast<std::size_t>(g.out_channels * d.m));
  detail::gemm(false, false, static_cast<int>(g.out_channels), static_cast<int>(d.m),
               static_cast<int>(d.k), S(1), p.weight.data(), static_cast<int>(d.k),
               col.data(), static_cast<int>(d.m), S(0), y.data(),
               static_cast<int>(d.m));
  const Shape& s = x.shape();
  Tensor<S> out(Shape{s.n, s.t, g.out_channels, d.oh, d.ow});
  S* o = out.data();
  for (std::int64_t f = 0; f < d.frames; ++f) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const S* src = y.data() + oc * d.m + f * d.p;
      S* dst = o + (f * g.out_channels + oc) * d.p;
      const S b = p.bias ? (*p.bias)[static_cast<std::size_t>(oc)] : S(0);
      for (std::int64_t q = 0; q < d.p; ++q) dst[q] = src[q] + b;
    }
  }
  return out;
}

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& x, const Conv2dParams<S>& p,
                               const Tensor<S>& grad_out) {
  const Conv2dGeometry& g = p.geom;
  const ConvDims d = conv_dims(x.shape(), g);
  const Shape& s = x.shape();
  const Shape expected{s.n, s.t, g.out_channels, d.oh, d.ow};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv backward: grad shape " + grad_out.shape().str() +
                     " != " + expected.str());
  }
  std::vector<S> dy(static_cast<std::size_t>(g.out_channels * d.m));
  const S* go = grad_out.data();
  for (std::int64_t f = 0; f < d.frames; ++f) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const S* src = go + (f * g.out_channels + oc) * d.p;
      std::copy(src, src + d.p, dy.data() + oc * d.m + f * d.p);
    }
  }
  std::vector<S> col(static_cast<std::size_t>(d.k * d.m));
  im2col(x.data(), d, g, col.data());

  Conv2dGrads<S> grads;
  grads.grad_w = Tensor<S>(g.weight_shape());
  detail::gemm(false, true, static_cast<int>(g.out_channels), static_cast<int>(d.k),
               static_cast<int>(d.m), S(1), dy.data(), static_cast<int>(d.m),
               col.data(), static_cast<int>(d.m), S(0), grads.grad_w.data(),
               static_cast<int>(d.k));
  if (p.bias) {
    Tensor<S> gb(Shape{1, 1, g.out_channels, 1, 1});
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      double acc = 0.0;
      const S* row = dy.data() + oc * d.m;
      for (std::int64_t q = 0; q < d.m; ++q) acc += row[q];
      gb[static_cast<std::size_t>(oc)] = static_cast<S>(acc);
    }
    grads.grad_b = std::move(gb);
  }
  detail::gemm(true, false, static_cast<int>(d.k), static_cast<int>(d.m),
               static_cast<int>(g.out_channels), S(1), p.weight.data(),
               static_cast<int>(d.k), dy.data(), static_cast<int>(d.m), S(0),
               col.data(), static_cast<int>(d.m));
  grads.grad_x = Tensor<S>(s);
  col2im(col.data(), d, g, grads.grad_x.data());
  return grads;
}

// ------------------------------------------------------------- batchnorm

template <typename S>
BatchNormParams<S> BatchNormParams<S>::make(std::int64_t channels) {
  if (channels < 1) throw ConfigError("batchnorm needs >= 1 channel");
  const Shape vec{1, 1, channels, 1, 1};
  BatchNormParams p;
  p.gamma = Tensor<S>(vec);
  p.gamma.fill(S(1));
  p.beta = Tensor<S>(vec);
  p.running_mean = Tensor<S>(vec);
  p.running_var = Tensor<S>(vec);
  p.running_var.fill(S(1));
  return p;
}

template <typename S>
Tensor<S> batchnorm_forward(const Tensor<S>& x, BatchNormParams<S>& p, Mode mode,
                            BatchNormCache<S>* cache) {
  const Shape& s = x.shape();
  const std::int64_t C = p.channels();
  if (s.c != C) {
    throw ShapeError("batchnorm expects " + std::to_string(C) +
                     " channels, got " + std::to_string(s.c));
  }
  const std::int64_t frames = s.n * s.t;
  const std::int64_t plane = s.h * s.w;
  const std::int64_t count = frames * plane;
  const bool batch_stats = mode == Mode::kTrain && !p.frozen;
  std::vector<double> mean(static_cast<std::size_t>(C));
  std::vector<double> inv_std(static_cast<std::size_t>(C));
  const S* xd = x.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double mu, var;
    if (batch_stats) {
      double sum = 0.0;
      for (std::int64_t f = 0; f < frames; ++f) {
        const S* src = xd + (f * C + c) * plane;
        for (std::int64_t q = 0; q < plane; ++q) sum += src[q];
      }
      mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::int64_t f = 0; f < frames; ++f) {
        const S* src = xd + (f * C + c) * plane;
        for (std::int64_t q = 0; q < plane; ++q) {
          const double dv = src[q] - mu;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased =
          count > 1 ? sq / static_cast<double>(count - 1) : var;
      const auto ci = static_cast<std::size_t>(c);
      p.running_mean[ci] = static_cast<S>((1.0 - p.momentum) * p.running_mean[ci] +
                                          p.momentum * mu);
      p.running_var[ci] = static_cast<S>((1.0 - p.momentum) * p.running_var[ci] +
                                         p.momentum * unbiased);
    } else {
      mu = p.running_mean[static_cast<std::size_t>(c)];
      var = p.running_var[static_cast<std::size_t>(c)];
    }
    mean[static_cast<std::size_t>(c)] = mu;
    inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + p.eps);
  }
  Tensor<S> y(s);
  Tensor<S> xhat;
  if (cache) xhat = Tensor<S>(s);
  S* yd = y.data();
  for (std::int64_t f = 0; f < frames; ++f) {
    for (std::int64_t c = 0; c < C; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double mu = mean[ci];
      const double is = inv_std[ci];
      const double gm = p.gamma[ci];
      const double bt = p.beta[ci];
      const std::int64_t base = (f * C + c) * plane;
      for (std::int64_t q = 0; q < plane; ++q) {
        const double xh = (xd[base + q] - mu) * is;
        if (cache) xhat[static_cast<std::size_t>(base + q)] = static_cast<S>(xh);
        yd[base + q] = static_cast<S>(gm * xh + bt);
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->batch_stats = batch_stats;
  }
  return y;
}

template <typename S>
BatchNormGrads<S> batchnorm_backward(const Tensor<S>& grad_out,
                                     const BatchNormParams<S>& p,
                                     const BatchNormCache<S>& cache) {
  const Shape& s = grad_out.shape();
  if (s != cache.xhat.shape()) {
    throw ShapeError("batchnorm backward: grad shape " + s.str() +
                     " != cached " + cache.xhat.shape().str());
  }
  const std::int64_t C = p.channels();
  const std::int64_t frames = s.n * s.t;
  const std::int64_t plane = s.h * s.w;
  const double m = static_cast<double>(frames * plane);
  BatchNormGrads<S> g;
  g.grad_x = Tensor<S>(s);
  g.grad_gamma = Tensor<S>(p.gamma.shape());
  g.grad_beta = Tensor<S>(p.beta.shape());
  const S* gy = grad_out.data();
  const S* xh = cache.xhat.data();
  S* gx = g.grad_x.data();
  for (std::int64_t c = 0; c < C; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::int64_t f = 0; f < frames; ++f) {
      const std::int64_t base = (f * C + c) * plane;
      for (std::int64_t q = 0; q < plane; ++q) {
        sum_g += gy[base + q];
        sum_gx += static_cast<double>(gy[base + q]) * xh[base + q];
      }
    }
    g.grad_beta[ci] = static_cast<S>(sum_g);
    g.grad_gamma[ci] = static_cast<S>(sum_gx);
    const double scale = static_cast<double>(p.gamma[ci]) * cache.inv_std[ci];
    for (std::int64_t f = 0; f < frames; ++f) {
      const std::int64_t base = (f * C + c) * plane;
      for (std::int64_t q = 0; q < plane; ++q) {
        if (cache.batch_stats) {
          gx[base + q] = static_cast<S>(
              scale * (gy[base + q] - sum_g / m - xh[base + q] * sum_gx / m));
        } else {
          gx[base + q] = static_cast<S>(scale * gy[base + q]);
        }
      }
    }
  }
  return g;
}

// ------------------------------------------------------------------ relu

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  const S* src = x.data();
  S* dst = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > S(0) ? src[i] : S(0);
  return y;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& y, const Tensor<S>& grad_out) {
  if (y.shape() != grad_out.shape()) throw ShapeError("relu backward shape mismatch");
  Tensor<S> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > S(0) ? grad_out[i] : S(0);
  return g;
}

// --------------------------------------------------------------- maxpool

std::int64_t PoolGeometry::out_size(std::int64_t in) const {
  const std::int64_t padded = in + 2 * padding;
  if (padded < kernel || padding >= kernel) {
    throw ShapeError("pooling window " + std::to_string(kernel) +
                     " exceeds input " + std::to_string(in));
  }
  return (padded - kernel) / stride + 1;
}

template <typename S>
MaxPoolResult<S> maxpool_forward(const Tensor<S>& x, const PoolGeometry& g) {
  const Shape& s = x.shape();
  const std::int64_t oh = g.out_size(s.h);
  const std::int64_t ow = g.out_size(s.w);
  if (x.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("maxpool input too large");
  }
  MaxPoolResult<S> r;
  r.y = Tensor<S>(Shape{s.n, s.t, s.c, oh, ow});
  r.argmax.resize(r.y.size());
  const std::int64_t planes = s.n * s.t * s.c;
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const std::int64_t in_base = pl * s.h * s.w;
    const S* src = x.data() + in_base;
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        S best = -std::numeric_limits<S>::infinity();
        std::int64_t arg = -1;
        for (std::int64_t di = 0; di < g.kernel; ++di) {
          const std::int64_t hi = i * g.stride - g.padding + di;
          if (hi < 0 || hi >= s.h) continue;
          for (std::int64_t dj = 0; dj < g.kernel; ++dj) {
            const std::int64_t wi = j * g.stride - g.padding + dj;
            if (wi < 0 || wi >= s.w) continue;
            const S v = src[hi * s.w + wi];
            if (arg < 0 || v > best) {
              best = v;
              arg = hi * s.w + wi;
            }
          }
        }
        const std::size_t o = static_cast<std::size_t>((pl * oh + i) * ow + j);
        r.y[o] = best;
        r.argmax[o] = static_cast<std::uint32_t>(in_base + arg);
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> maxpool_backward(const Shape& input_shape,
                           const std::vector<std::uint32_t>& argmax,
                           const Tensor<S>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool backward: argmax/grad size mismatch");
  }
  Tensor<S> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

// ------------------------------------------------------- global avg pool

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  const Shape& s = x.shape();
  Tensor<S> y(Shape{s.n, 1, s.c, 1, 1});
  const std::int64_t plane = s.h * s.w;
  const double denom = static_cast<double>(s.t * plane);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < s.t; ++t) {
        const S* src = x.frame(n, t) + c * plane;
        for (std::int64_t q = 0; q < plane; ++q) acc += src[q];
      }
      y[static_cast<std::size_t>(n * s.c + c)] = static_cast<S>(acc / denom);
    }
  }
  return y;
}

template <typename S>
Tensor<S> global_avg_pool_backward(const Shape& s, const Tensor<S>& grad_out) {
  if (grad_out.shape() != Shape{s.n, 1, s.c, 1, 1}) {
    throw ShapeError("global_avg_pool backward: grad shape " +
                     grad_out.shape().str());
  }
  Tensor<S> g(s);
  const std::int64_t plane = s.h * s.w;
  const double denom = static_cast<double>(s.t * plane);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t t = 0; t < s.t; ++t) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const S v = static_cast<S>(grad_out[static_cast<std::size_t>(n * s.c + c)] / denom);
        S* dst = g.frame(n, t) + c * plane;
        std::fill(dst, dst + plane, v);
      }
    }
  }
  return g;
}

// --------------------------------------------------------------- dropout

template <typename S>
Tensor<S> dropout_forward(const Tensor<S>& x, double rate, Mode mode,
                          std::mt19937_64& rng, Tensor<S>* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  Tensor<S> m(x.shape());
  if (mode == Mode::kEval || rate == 0.0) {
    m.fill(S(1));
  } else {
    std::bernoulli_distribution keep(1.0 - rate);
    const S scale = static_cast<S>(1.0 / (1.0 - rate));
    for (S& v : m.values()) v = keep(rng) ? scale : S(0);
  }
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * m[i];
  if (mask) *mask = std::move(m);
  return y;
}

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& mask, const Tensor<S>& grad_out) {
  if (mask.shape() != grad_out.shape()) throw ShapeError("dropout backward shape mismatch");
  Tensor<S> g(mask.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

// ---------------------------------------------------------------- linear

template <typename S>
LinearParams<S> LinearParams<S>::make(std::int64_t in, std::int64_t out) {
  if (in < 1 || out < 1) throw ConfigError("linear layer needs positive sizes");
  LinearParams p;
  p.in_features = in;
  p.out_features = out;
  p.weight = Tensor<S>(Shape{out, 1, in, 1, 1});
  p.bias = Tensor<S>(Shape{1, 1, out, 1, 1});
  return p;
}

template <typename S>
Tensor<S> linear_forward(const Tensor<S>& x, const LinearParams<S>& p) {
  const std::int64_t n = x.shape().n;
  if (static_cast<std::int64_t>(x.size()) != n * p.in_features) {
    throw ShapeError("linear expects " + std::to_string(p.in_features) +
                     " features per sample, got shape " + x.shape().str());
  }
  Tensor<S> y(Shape{n, 1, p.out_features, 1, 1});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(p.bias.data(), p.bias.data() + p.out_features,
              y.data() + i * p.out_features);
  }
  detail::gemm(false, true, static_cast<int>(n), static_cast<int>(p.out_features),
               static_cast<int>(p.in_features), S(1), x.data(),
               static_cast<int>(p.in_features), p.weight.data(),
               static_cast<int>(p.in_features), S(1), y.data(),
               static_cast<int>(p.out_features));
  return y;
}

template <typename S>
LinearGrads<S> linear_backward(const Tensor<S>& x, const LinearParams<S>& p,
                               const Tensor<S>& grad_out) {
  const std::int64_t n = x.shape().n;
  if (grad_out.shape() != Shape{n, 1, p.out_features, 1, 1}) {
    throw ShapeError("linear backward: grad shape " + grad_out.shape().str());
  }
  LinearGrads<S> g;
  g.grad_x = Tensor<S>(x.shape());
  g.grad_w = Tensor<S>(p.weight.shape());
  g.grad_b = Tensor<S>(p.bias.shape());
  detail::gemm(true, false, static_cast<int>(p.out_features),
               static_cast<int>(p.in_features), static_cast<int>(n), S(1),
               grad_out.data(), static_cast<int>(p.out_features), x.data(),
               static_cast<int>(p.in_features), S(0), g.grad_w.data(),
               static_cast<int>(p.in_features));
  detail::gemm(false, false, static_cast<int>(n), static_cast<int>(p.in_features),
               static_cast<int>(p.out_features), S(1), grad_out.data(),
               static_cast<int>(p.out_features), p.weight.data(),
               static_cast<int>(p.in_features), S(0), g.grad_x.data(),
               static_cast<int>(p.in_features));
  for (std::int64_t o = 0; o < p.out_features; ++o) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      acc += grad_out[static_cast<std::size_t>(i * p.out_features + o)];
    }
    g.grad_b[static_cast<std::size_t>(o)] = static_cast<S>(acc);
  }
  return g;
}

// ---------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Tensor<S> out = a;
  add_inplace(out, b);
  return out;
}

template <typename S>
void add_inplace(Tensor<S>& acc, const Tensor<S>& b) {
  if (acc.shape() != b.shape()) {
    throw ShapeError("add: " + acc.shape().str() + " vs " + b.shape().str());
  }
  S* d = acc.data();
  const S* s = b.data();
  for (std::size_t i = 0; i < acc.size(); ++i) d[i] += s[i];
}

// --------------------------------------------------- stateful wrappers

template <typename S>
Conv2dLayer<S>::Conv2dLayer(const Conv2dGeometry& g)
    : params_(Conv2dParams<S>::make(g)), grad_w_(g.weight_shape()) {
  if (g.bias) grad_b_ = Tensor<S>(Shape{1, 1, g.out_channels, 1, 1});
}

template <typename S>
Tensor<S> Conv2dLayer<S>::forward(const Tensor<S>& x) {
  input_ = x;
  return conv2d_forward(x, params_);
}

template <typename S>
Tensor<S> Conv2dLayer<S>::backward(const Tensor<S>& grad_out) {
  Conv2dGrads<S> g = conv2d_backward(input_, params_, grad_out);
  add_inplace(grad_w_, g.grad_w);
  if (grad_b_) add_inplace(*grad_b_, *g.grad_b);
  return std::move(g.grad_x);
}

template <typename S>
void Conv2dLayer<S>::zero_grad() {
  grad_w_.fill(S(0));
  if (grad_b_) grad_b_->fill(S(0));
}

template <typename S>
void Conv2dLayer<S>::collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
  out.push_back({prefix + ".weight", &params_.weight, &grad_w_, true, true});
  if (params_.bias) out.push_back({prefix + ".bias", &*params_.bias, &*grad_b_, false, true});
}

template <typename S>
BatchNormLayer<S>::BatchNormLayer(std::int64_t channels)
    : params_(BatchNormParams<S>::make(channels)),
      grad_gamma_(Shape{1, 1, channels, 1, 1}),
      grad_beta_(Shape{1, 1, channels, 1, 1}) {}

template <typename S>
Tensor<S> BatchNormLayer<S>::forward(const Tensor<S>& x, Mode mode) {
  return batchnorm_forward(x, params_, mode, &cache_);
}

template <typename S>
Tensor<S> BatchNormLayer<S>::backward(const Tensor<S>& grad_out) {
  BatchNormGrads<S> g = batchnorm_backward(grad_out, params_, cache_);
  add_inplace(grad_gamma_, g.grad_gamma);
  add_inplace(grad_beta_, g.grad_beta);
  return std::move(g.grad_x);
}

template <typename S>
void BatchNormLayer<S>::zero_grad() {
  grad_gamma_.fill(S(0));
  grad_beta_.fill(S(0));
}

template <typename S>
void BatchNormLayer<S>::collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
  const bool trainable = !params_.frozen;
  out.push_back({prefix + ".gamma", &params_.gamma, &grad_gamma_, false, trainable});
  out.push_back({prefix + ".beta", &params_.beta, &grad_beta_, false, trainable});
}

template <typename S>
void BatchNormLayer<S>::collect_buffers(const std::string& prefix,
                                        std::vector<BufferRef<S>>& out) {
  out.push_back({prefix + ".running_mean", &params_.running_mean});
  out.push_back({prefix + ".running_var", &params_.running_var});
}

template <typename S>
LinearLayer<S>::LinearLayer(std::int64_t in, std::int64_t out)
    : params_(LinearParams<S>::make(in, out)),
      grad_w_(params_.weight.shape()),
      grad_b_(params_.bias.shape()) {}

template <typename S>
Tensor<S> LinearLayer<S>::forward(const Tensor<S>& x) {
  input_ = x;
  return linear_forward(x, params_);
}

template <typename S>
Tensor<S> LinearLayer<S>::backward(const Tensor<S>& grad_out) {
  LinearGrads<S> g = linear_backward(input_, params_, grad_out);
  add_inplace(grad_w_, g.grad_w);
  add_inplace(grad_b_, g.grad_b);
  return std::move(g.grad_x);
}

template <typename S>
void LinearLayer<S>::zero_grad() {
  grad_w_.fill(S(0));
  grad_b_.fill(S(0));
}

template <typename S>
void LinearLayer<S>::collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
  out.push_back({prefix + ".weight", &params_.weight, &grad_w_, true, true});
  out.push_back({prefix + ".bias", &params_.bias, &grad_b_, false, true});
}

#define VSHUFFLE_INSTANTIATE_LAYERS(S)                                              \
  template struct Conv2dParams<S>;                                                  \
  template Tensor<S> conv2d_forward(const Tensor<S>&, const Conv2dParams<S>&);      \
  template Conv2dGrads<S> conv2d_backward(const Tensor<S>&, const Conv2dParams<S>&, \
                                          const Tensor<S>&);                        \
  template struct BatchNormParams<S>;                                               \
  template Tensor<S> batchnorm_forward(const Tensor<S>&, BatchNormParams<S>&, Mode, \
                                       BatchNormCache<S>*);                         \
  template BatchNormGrads<S> batchnorm_backward(                                    \
      const Tensor<S>&, const BatchNormParams<S>&, const BatchNormCache<S>&);       \
  template Tensor<S> relu_forward(const Tensor<S>&);                                \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);             \
  template MaxPoolResult<S> maxpool_forward(const Tensor<S>&, const PoolGeometry&); \
  template Tensor<S> maxpool_backward(const Shape&, const std::vector<std::uint32_t>&, \
                                      const Tensor<S>&);                            \
  template Tensor<S> global_avg_pool(const Tensor<S>&);                             \
  template Tensor<S> global_avg_pool_backward(const Shape&, const Tensor<S>&);      \
  template Tensor<S> dropout_forward(const Tensor<S>&, double, Mode,                \
                                     std::mt19937_64&, Tensor<S>*);                 \
  template Tensor<S> dropout_backward(const Tensor<S>&, const Tensor<S>&);          \
  template struct LinearParams<S>;                                                  \
  template Tensor<S> linear_forward(const Tensor<S>&, const LinearParams<S>&);      \
  template LinearGrads<S> linear_backward(const Tensor<S>&, const LinearParams<S>&, \
                                          const Tensor<S>&);                        \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                       \
  template void add_inplace(Tensor<S>&, const Tensor<S>&);                          \
  template class Conv2dLayer<S>;                                                    \
  template class BatchNormLayer<S>;                                                 \
  template class LinearLayer<S>;

VSHUFFLE_INSTANTIATE_LAYERS(float)
VSHUFFLE_INSTANTIATE_LAYERS(double)

#undef VSHUFFLE_INSTANTIATE_LAYERS

}  // namespace vshuffle
