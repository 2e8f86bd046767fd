// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace bilcnet::kernels {

namespace {

// Work below this many multiply-adds stays on the calling thread.
constexpr std::size_t kParallelThreshold = 1 << 15;

// Four output rows per pass share every load of a B row.
template <typename T>
inline void nn_rows(std::size_t i0, std::size_t rows, std::size_t k, std::size_t p, const T* a,
                    const T* b, T* c) {
  if (rows == 4) {
    T* c0 = c + (i0 + 0) * p;
    T* c1 = c + (i0 + 1) * p;
    T* c2 = c + (i0 + 2) * p;
    T* c3 = c + (i0 + 3) * p;
    const T* a0 = a + (i0 + 0) * k;
    const T* a1 = a + (i0 + 1) * k;
    const T* a2 = a + (i0 + 2) * k;
    const T* a3 = a + (i0 + 3) * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * p;
      const T v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
#pragma omp simd
      for (std::size_t j = 0; j < p; ++j) {
        const T bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* crow = c + (i0 + r) * p;
    const T* arow = a + (i0 + r) * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * p;
      const T v = arow[kk];
#pragma omp simd
      for (std::size_t j = 0; j < p; ++j) crow[j] += v * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  const std::size_t blocks = (m + 3) / 4;
  const bool par = m * k * p >= kParallelThreshold && blocks > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * 4;
    nn_rows(i0, std::min<std::size_t>(4, m - i0), k, p, a, b, c);
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  const std::vector<T> bt = transpose(p, k, b);
  gemm_nn(m, k, p, a, bt.data(), c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  const std::vector<T> at = transpose(m, k, a);
  gemm_nn(k, m, p, at.data(), b, c);
}

template <typename T>
void add_row_bias(std::size_t n, std::size_t p, const T* bias, T* out) {
#pragma omp parallel for schedule(static) if (n * p >= kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) {
    T* row = out + i * p;
#pragma omp simd
    for (std::size_t j = 0; j < p; ++j) row[j] += bias[j];
  }
}

template <typename T>
void column_sums(std::size_t n, std::size_t p, const T* g, T* acc) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = g + i * p;
#pragma omp simd
    for (std::size_t j = 0; j < p; ++j) acc[j] += row[j];
  }
}

namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      T acc = c[i * p + j];
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * p + j];
      c[i * p + j] = acc;
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      T acc = c[i * p + j];
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[j * k + kk];
      c[i * p + j] = acc;
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      T acc = c[i * p + j];
      for (std::size_t r = 0; r < m; ++r) acc += a[r * k + i] * b[r * p + j];
      c[i * p + j] = acc;
    }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace reference

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void add_row_bias<float>(std::size_t, std::size_t, const float*, float*);
template void add_row_bias<double>(std::size_t, std::size_t, const double*, double*);
template void column_sums<float>(std::size_t, std::size_t, const float*, float*);
template void column_sums<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace bilcnet::kernels
