// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/layers.hpp"

#include <cmath>
#include <random>

#include "bilcnet/kernels.hpp"

namespace bilcnet {

template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, bool bias)
    : weight(name + ".weight", {in, out}),
      bias(name + ".bias", {out}, false),
      in_(in),
      out_(out),
      has_bias_(bias) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  init_uniform(weight.value, bound, rng);
  if (has_bias_) init_uniform(bias.value, bound, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  if (x.cols() != in_) {
    fail(ErrorCode::ShapeMismatch, weight.name + ": input " + shape_string(x.shape()) +
                                       " does not end in " + std::to_string(in_));
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_;
  Tensor<T> y(out_shape);
  const std::size_t rows = x.rows();
  kernels::gemm_nn(rows, in_, out_, x.data(), weight.value.data(), y.data());
  if (has_bias_) kernels::add_row_bias(rows, out_, bias.value.data(), y.data());
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& x, const Tensor<T>& gy) {
  const std::size_t rows = x.rows();
  if (gy.rows() != rows || gy.cols() != out_) {
    fail(ErrorCode::ShapeMismatch, weight.name + ": grad " + shape_string(gy.shape()));
  }
  kernels::gemm_tn(rows, in_, out_, x.data(), gy.data(), weight.grad.data());
  if (has_bias_) kernels::column_sums(rows, out_, gy.data(), bias.grad.data());
  Tensor<T> gx(x.shape());
  kernels::gemm_nt(rows, out_, in_, gy.data(), weight.value.data(), gx.data());
  return gx;
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

template <typename T>
void Linear<T>::zero_output() {
  weight.value.zero();
  bias.value.zero();
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t dim, T eps)
    : gamma(name + ".gamma", {dim}, false), beta(name + ".beta", {dim}, false), eps_(eps) {
  gamma.value.fill(T(1));
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x, ops::LayerNormCache<T>* cache) const {
  return ops::layer_norm(x, gamma.value, beta.value, eps_, cache);
}

template <typename T>
Tensor<T> LayerNorm<T>::backward(const Tensor<T>& gy, const ops::LayerNormCache<T>& cache) {
  return ops::layer_norm_backward(gy, gamma.value, cache, &gamma.grad, &beta.grad);
}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t dim, T momentum, T eps)
    : gamma(name + ".gamma", {dim}, false),
      beta(name + ".beta", {dim}, false),
      running_mean{name + ".running_mean", Tensor<T>({dim})},
      running_var{name + ".running_var", Tensor<T>({dim}, T(1))},
      momentum_(momentum),
      eps_(eps) {
  gamma.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode, ops::BatchNormCache<T>* cache) {
  return ops::batch_norm(x, gamma.value, beta.value, running_mean.value, running_var.value, mode,
                         momentum_, eps_, cache);
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& gy, const ops::BatchNormCache<T>& cache) {
  return ops::batch_norm_backward(gy, gamma.value, cache, &gamma.grad, &beta.grad);
}

template <typename T>
void BatchNorm<T>::collect(ParamList<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

template <typename T>
void BatchNorm<T>::collect_buffers(BufferList<T>& out) {
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

template void init_uniform(Tensor<float>&, double, Rng&);
template void init_uniform(Tensor<double>&, double, Rng&);
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;

}  // namespace bilcnet
