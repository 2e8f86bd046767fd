// SPDX-License-Identifier: Apache-2.0
//
// Parametrized building blocks shared by the recurrent, conformer and head
// modules. Inputs of any rank are treated as matrices over their last axis.

#pragma once

#include <string>
#include <vector>

#include "bilcnet/ops.hpp"
#include "bilcnet/tensor.hpp"

namespace bilcnet {

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
using BufferList = std::vector<Buffer<T>*>;

/// Uniform(-bound, bound) fill.
template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng);

/// y = x W + b with W stored [in x out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  /// Accumulates weight/bias grads; returns dL/dx shaped like x.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy);
  void collect(ParamList<T>& out);
  void zero_output();

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool has_bias_ = true;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, ops::LayerNormCache<T>* cache) const;
  Tensor<T> backward(const Tensor<T>& gy, const ops::LayerNormCache<T>& cache);
  void collect(ParamList<T>& out);

  Parameter<T> gamma;
  Parameter<T> beta;

 private:
  T eps_ = T(1e-5);
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t dim, T momentum = T(0.1), T eps = T(1e-5));

  /// Train mode updates the running statistics.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, ops::BatchNormCache<T>* cache);
  Tensor<T> backward(const Tensor<T>& gy, const ops::BatchNormCache<T>& cache);
  void collect(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  Parameter<T> gamma;
  Parameter<T> beta;
  Buffer<T> running_mean;
  Buffer<T> running_var;

 private:
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
};

}  // namespace bilcnet
