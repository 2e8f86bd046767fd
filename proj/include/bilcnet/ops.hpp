// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Each forward has a matching *_backward that
// returns the input gradient and accumulates parameter gradients into the
// supplied tensors. Forward functions that need saved state take an optional
// cache pointer; pass nullptr for inference.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bilcnet/tensor.hpp"

namespace bilcnet {

enum class Mode { Train, Eval };

using Rng = std::mt19937_64;

namespace ops {

// ---- matmul ---------------------------------------------------------------

/// a[m x k] * b[k x p]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// ga += g * b^T, gb += a^T * g. Either output may be null.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g, Tensor<T>* ga,
                     Tensor<T>* gb);

// ---- softmax --------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Jacobian-vector product given the forward output y.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& gy, std::size_t axis);

// ---- layer norm (last axis) ----------------------------------------------

template <typename T>
struct LayerNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache);

template <typename T>
Tensor<T> layer_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                              const LayerNormCache<T>& cache, Tensor<T>* ggamma, Tensor<T>* gbeta);

// ---- pointwise nonlinearities --------------------------------------------

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& gy);

/// x * sigmoid(x)
template <typename T>
Tensor<T> swish(const Tensor<T>& x);
template <typename T>
Tensor<T> swish_backward(const Tensor<T>& x, const Tensor<T>& gy);

/// Gated linear unit over the last axis: [a | b] -> a * sigmoid(b).
template <typename T>
Tensor<T> glu(const Tensor<T>& x);
template <typename T>
Tensor<T> glu_backward(const Tensor<T>& x, const Tensor<T>& gy);

template <typename T>
inline T sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

// ---- batch norm (rows x features) -----------------------------------------

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
  Mode mode = Mode::Eval;
};

/// Train mode normalizes with batch moments and blends them into the running
/// statistics (running = (1 - momentum) * running + momentum * batch, the
/// variance update using the unbiased batch estimate). Eval mode uses the
/// running statistics only.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, T momentum,
                     T eps, BatchNormCache<T>* cache);

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                              const BatchNormCache<T>& cache, Tensor<T>* ggamma, Tensor<T>* gbeta);

// ---- dropout --------------------------------------------------------------

/// Per-element multiplier; empty means identity.
template <typename T>
struct DropoutMask {
  std::vector<T> scale;
};

/// Inverted dropout. Eval mode or p == 0 is the identity and draws nothing
/// from rng.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng, DropoutMask<T>* mask);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& gy, const DropoutMask<T>& mask);

// ---- depthwise conv along time --------------------------------------------

/// x[n x T x c] (or [T x c]), kernel[k x c], zero "same" padding, k odd.
template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
Tensor<T> depthwise_conv1d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                    const Tensor<T>& gy, Tensor<T>* gkernel);

// ---- elementwise helpers ---------------------------------------------------

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src, T scale = T(1));

template <typename T>
Tensor<T> scaled(const Tensor<T>& x, T scale);

}  // namespace ops
}  // namespace bilcnet
