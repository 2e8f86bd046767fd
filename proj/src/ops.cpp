// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/ops.hpp"

#include <cmath>
#include <numbers>

#include "bilcnet/kernels.hpp"

namespace bilcnet::ops {

namespace {

constexpr std::size_t kParallelElems = 1 << 14;

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) fail(ErrorCode::ShapeMismatch, std::string(what) + " must be rank 2, got " + shape_string(t.shape()));
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) fail(ErrorCode::ShapeMismatch, "axis out of range for " + shape_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  kernels::gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data(), b.data(), c.data());
  return c;
}

template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g, Tensor<T>* ga,
                     Tensor<T>* gb) {
  require_shape(g, {a.dim(0), b.dim(1)}, "matmul grad");
  if (ga) {
    require_shape(*ga, a.shape(), "matmul lhs grad");
    kernels::gemm_nt(a.dim(0), b.dim(1), a.dim(1), g.data(), b.data(), ga->data());
  }
  if (gb) {
    require_shape(*gb, b.shape(), "matmul rhs grad");
    kernels::gemm_tn(a.dim(0), a.dim(1), b.dim(1), a.data(), g.data(), gb->data());
  }
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = split_axis(x.shape(), axis);
  Tensor<T> y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = x[base];
      for (std::size_t i = 1; i < s.len; ++i) mx = std::max(mx, x[base + i * s.inner]);
      T sum = 0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const T e = std::exp(x[base + i * s.inner] - mx);
        y[base + i * s.inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < s.len; ++i) y[base + i * s.inner] /= sum;
    }
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& gy, std::size_t axis) {
  require_shape(gy, y.shape(), "softmax grad");
  const auto s = split_axis(y.shape(), axis);
  Tensor<T> gx(y.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T dot = 0;
      for (std::size_t i = 0; i < s.len; ++i) dot += y[base + i * s.inner] * gy[base + i * s.inner];
      for (std::size_t i = 0; i < s.len; ++i) {
        const std::size_t idx = base + i * s.inner;
        gx[idx] = y[idx] * (gy[idx] - dot);
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache) {
  const std::size_t d = x.cols();
  require_shape(gamma, {d}, "layer_norm gamma");
  require_shape(beta, {d}, "layer_norm beta");
  const std::size_t rows = x.rows();
  Tensor<T> y(x.shape());
  Tensor<T> xhat;
  std::vector<T> inv_std;
  if (cache) {
    xhat = Tensor<T>(x.shape());
    inv_std.resize(rows);
  }
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    T* yr = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * is;
      yr[j] = h * gamma[j] + beta[j];
      if (cache) xhat[r * d + j] = h;
    }
    if (cache) inv_std[r] = is;
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                              const LayerNormCache<T>& cache, Tensor<T>* ggamma, Tensor<T>* gbeta) {
  require_shape(gy, cache.xhat.shape(), "layer_norm grad");
  const std::size_t d = gy.cols();
  const std::size_t rows = gy.rows();
  Tensor<T> gx(gy.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = gy.data() + r * d;
    const T* h = cache.xhat.data() + r * d;
    T sum_dh = 0, sum_dh_h = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T dh = g[j] * gamma[j];
      sum_dh += dh;
      sum_dh_h += dh * h[j];
      if (ggamma) (*ggamma)[j] += g[j] * h[j];
      if (gbeta) (*gbeta)[j] += g[j];
    }
    const T mean_dh = sum_dh / T(d);
    const T mean_dh_h = sum_dh_h / T(d);
    T* out = gx.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = cache.inv_std[r] * (g[j] * gamma[j] - mean_dh - h[j] * mean_dh_h);
    }
  }
  return gx;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    y[i] = T(0.5) * v * std::erfc(-v * inv_sqrt2);
  }
  return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  require_shape(gy, x.shape(), "gelu grad");
  Tensor<T> gx(x.shape());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
#pragma omp parallel for schedule(static) if (x.size() >= kParallelElems)
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    const T cdf = T(0.5) * std::erfc(-v * inv_sqrt2);
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
    gx[i] = gy[i] * (cdf + v * pdf);
  }
  return gx;
}

template <typename T>
Tensor<T> swish(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

template <typename T>
Tensor<T> swish_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  require_shape(gy, x.shape(), "swish grad");
  Tensor<T> gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = sigmoid(x[i]);
    gx[i] = gy[i] * (s + x[i] * s * (T(1) - s));
  }
  return gx;
}

template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  const std::size_t two_c = x.cols();
  if (two_c % 2 != 0) fail(ErrorCode::ShapeMismatch, "glu needs an even last axis, got " + shape_string(x.shape()));
  const std::size_t c = two_c / 2;
  Shape out_shape = x.shape();
  out_shape.back() = c;
  Tensor<T> y(out_shape);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* xr = x.data() + r * two_c;
    T* yr = y.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) yr[j] = xr[j] * sigmoid(xr[c + j]);
  }
  return y;
}

template <typename T>
Tensor<T> glu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
  const std::size_t two_c = x.cols();
  const std::size_t c = two_c / 2;
  if (gy.cols() != c || gy.rows() != x.rows()) fail(ErrorCode::ShapeMismatch, "glu grad shape");
  Tensor<T> gx(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* xr = x.data() + r * two_c;
    const T* gr = gy.data() + r * c;
    T* out = gx.data() + r * two_c;
    for (std::size_t j = 0; j < c; ++j) {
      const T s = sigmoid(xr[c + j]);
      out[j] = gr[j] * s;
      out[c + j] = gr[j] * xr[j] * s * (T(1) - s);
    }
  }
  return gx;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, T momentum,
                     T eps, BatchNormCache<T>* cache) {
  const std::size_t d = x.cols();
  const std::size_t n = x.rows();
  require_shape(gamma, {d}, "batch_norm gamma");
  require_shape(beta, {d}, "batch_norm beta");
  require_shape(running_mean, {d}, "batch_norm running_mean");
  require_shape(running_var, {d}, "batch_norm running_var");
  if (mode == Mode::Train && n < 2) {
    fail(ErrorCode::BatchTooSmall, "train-mode batch norm needs at least 2 rows, got " + std::to_string(n));
  }
  std::vector<T> mean(d, T(0)), inv_std(d);
  if (mode == Mode::Train) {
    std::vector<T> var(d, T(0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x[r * d + j];
    for (std::size_t j = 0; j < d; ++j) mean[j] /= T(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const T c = x[r * d + j] - mean[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      const T biased = var[j] / T(n);
      inv_std[j] = T(1) / std::sqrt(biased + eps);
      running_mean[j] = (T(1) - momentum) * running_mean[j] + momentum * mean[j];
      running_var[j] = (T(1) - momentum) * running_var[j] + momentum * (var[j] / T(n - 1));
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = running_mean[j];
      inv_std[j] = T(1) / std::sqrt(running_var[j] + eps);
    }
  }
  Tensor<T> y(x.shape());
  Tensor<T> xhat = cache ? Tensor<T>(x.shape()) : Tensor<T>();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (x[r * d + j] - mean[j]) * inv_std[j];
      y[r * d + j] = h * gamma[j] + beta[j];
      if (cache) xhat[r * d + j] = h;
    }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                              const BatchNormCache<T>& cache, Tensor<T>* ggamma, Tensor<T>* gbeta) {
  require_shape(gy, cache.xhat.shape(), "batch_norm grad");
  const std::size_t d = gy.cols();
  const std::size_t n = gy.rows();
  std::vector<T> sum_dh(d, T(0)), sum_dh_h(d, T(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const T g = gy[r * d + j];
      const T h = cache.xhat[r * d + j];
      sum_dh[j] += g * gamma[j];
      sum_dh_h[j] += g * gamma[j] * h;
      if (ggamma) (*ggamma)[j] += g * h;
      if (gbeta) (*gbeta)[j] += g;
    }
  Tensor<T> gx(gy.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const T dh = gy[r * d + j] * gamma[j];
      if (cache.mode == Mode::Train) {
        const T h = cache.xhat[r * d + j];
        gx[r * d + j] = cache.inv_std[j] * (dh - sum_dh[j] / T(n) - h * sum_dh_h[j] / T(n));
      } else {
        gx[r * d + j] = cache.inv_std[j] * dh;
      }
    }
  return gx;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng, DropoutMask<T>* mask) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::InvalidProbability, "dropout p=" + std::to_string(p));
  if (mask) mask->scale.clear();
  if (mode == Mode::Eval || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = T(1.0 / (1.0 - p));
  std::vector<T> m(x.size());
  for (auto& v : m) v = keep(rng) ? scale : T(0);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * m[i];
  if (mask) mask->scale = std::move(m);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& gy, const DropoutMask<T>& mask) {
  if (mask.scale.empty()) return gy;
  if (mask.scale.size() != gy.size()) fail(ErrorCode::ShapeMismatch, "dropout mask size");
  Tensor<T> gx(gy.shape());
  for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * mask.scale[i];
  return gx;
}

namespace {

struct ConvDims {
  std::size_t n, t, c, k;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& kernel) {
  if (kernel.rank() != 2) fail(ErrorCode::ShapeMismatch, "depthwise kernel must be [k x c]");
  const std::size_t k = kernel.dim(0);
  if (k % 2 == 0) fail(ErrorCode::EvenKernel, "depthwise kernel size " + std::to_string(k));
  ConvDims d{};
  if (x.rank() == 2) {
    d = {1, x.dim(0), x.dim(1), k};
  } else if (x.rank() == 3) {
    d = {x.dim(0), x.dim(1), x.dim(2), k};
  } else {
    fail(ErrorCode::ShapeMismatch, "depthwise input must be [T x c] or [n x T x c]");
  }
  if (kernel.dim(1) != d.c) fail(ErrorCode::ShapeMismatch, "depthwise kernel channels");
  return d;
}

}  // namespace

template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel) {
  const auto d = conv_dims(x, kernel);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.k / 2);
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t t = 0; t < d.t; ++t) {
      T* yr = y.data() + (b * d.t + t) * d.c;
      for (std::size_t j = 0; j < d.k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(d.t)) continue;
        const T* xr = x.data() + (b * d.t + static_cast<std::size_t>(src)) * d.c;
        const T* kr = kernel.data() + j * d.c;
        for (std::size_t ch = 0; ch < d.c; ++ch) yr[ch] += xr[ch] * kr[ch];
      }
    }
  return y;
}

template <typename T>
Tensor<T> depthwise_conv1d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                    const Tensor<T>& gy, Tensor<T>* gkernel) {
  const auto d = conv_dims(x, kernel);
  require_shape(gy, x.shape(), "depthwise grad");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.k / 2);
  Tensor<T> gx(x.shape());
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t t = 0; t < d.t; ++t) {
      const T* gr = gy.data() + (b * d.t + t) * d.c;
      for (std::size_t j = 0; j < d.k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(d.t)) continue;
        const std::size_t row = (b * d.t + static_cast<std::size_t>(src)) * d.c;
        const T* kr = kernel.data() + j * d.c;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          gx[row + ch] += gr[ch] * kr[ch];
          if (gkernel) (*gkernel)[j * d.c + ch] += gr[ch] * x[row + ch];
        }
      }
    }
  return gx;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src, T scale) {
  if (dst.size() != src.size()) {
    fail(ErrorCode::ShapeMismatch, "add " + shape_string(src.shape()) + " into " + shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& x, T scale) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v *= scale;
  return y;
}

#define BILCNET_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template void matmul_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,  \
                                Tensor<T>*);                                                       \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                       \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&, std::size_t);            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,           \
                                LayerNormCache<T>*);                                               \
  template Tensor<T> layer_norm_backward(const Tensor<T>&, const Tensor<T>&,                       \
                                         const LayerNormCache<T>&, Tensor<T>*, Tensor<T>*);        \
  template Tensor<T> gelu(const Tensor<T>&);                                                       \
  template Tensor<T> gelu_backward(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> swish(const Tensor<T>&);                                                      \
  template Tensor<T> swish_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> glu(const Tensor<T>&);                                                        \
  template Tensor<T> glu_backward(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,  \
                                Tensor<T>&, Mode, T, T, BatchNormCache<T>*);                       \
  template Tensor<T> batch_norm_backward(const Tensor<T>&, const Tensor<T>&,                       \
                                         const BatchNormCache<T>&, Tensor<T>*, Tensor<T>*);        \
  template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&, DropoutMask<T>*);               \
  template Tensor<T> dropout_backward(const Tensor<T>&, const DropoutMask<T>&);                    \
  template Tensor<T> depthwise_conv1d(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> depthwise_conv1d_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                               const Tensor<T>&, Tensor<T>*);                      \
  template void add_inplace(Tensor<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> scaled(const Tensor<T>&, T);

BILCNET_INSTANTIATE_OPS(float)
BILCNET_INSTANTIATE_OPS(double)

}  // namespace bilcnet::ops
