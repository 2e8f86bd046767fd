// SPDX-License-Identifier: Apache-2.0
//
// Dense matrix kernels. All operate on row-major buffers and accumulate into
// the output (C += ...). Two implementations share one contract:
//
//   kernels::reference  plain triple loops, serial; the test oracle
//   kernels::           row-blocked, OpenMP-parallel over output rows
//
// Every output element is summed over the inner index in ascending order in
// both implementations, so results do not depend on the thread count.

#pragma once

#include <cstddef>

namespace bilcnet::kernels {

/// C[m x p] += A[m x k] * B[k x p]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);

/// C[m x p] += A[m x k] * B[p x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);

/// C[k x p] += A[m x k]^T * B[m x p]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);

/// out[n x p] += bias[p] broadcast over rows
template <typename T>
void add_row_bias(std::size_t n, std::size_t p, const T* bias, T* out);

/// acc[p] += column sums of g[n x p]
template <typename T>
void column_sums(std::size_t n, std::size_t p, const T* g, T* acc);

namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace bilcnet::kernels
