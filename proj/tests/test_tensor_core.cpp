// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"

#include "bilcnet/error.hpp"
#include "bilcnet/grad_check.hpp"
#include "bilcnet/kernels.hpp"
#include "bilcnet/ops.hpp"
#include "support.hpp"

using namespace bilcnet;
using testing::randn;

TEST_CASE("matmul examples") {
  const Tensor<double> a({2, 2}, {1, 2, 3, 4}), ones({2, 1}, {1, 1});
  CHECK(ops::matmul(a, ones).vec() == std::vector<double>{3, 7});
  const Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  const auto x = randn<double>({2, 5}, 3);
  CHECK(ops::matmul(eye, x).vec() == x.vec());
  CHECK_THROWS_AS(ops::matmul(a, Tensor<double>({3, 1})), Error);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  for (auto [m, k, p] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 13, 5}, {64, 61, 256}, {33, 128, 17}}) {
    const auto a = randn<float>({m, k}, m), b = randn<float>({k, p}, k), bt = randn<float>({p, k}, p);
    const auto g = randn<float>({m, p}, 99);
    std::vector<float> ref(m * p, 0.5f), par(m * p, 0.5f);
    kernels::reference::gemm_nn(m, k, p, a.data(), b.data(), ref.data());
    kernels::gemm_nn(m, k, p, a.data(), b.data(), par.data());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(par[i] == doctest::Approx(ref[i]).epsilon(1e-5));

    std::fill(ref.begin(), ref.end(), 0.0f);
    std::fill(par.begin(), par.end(), 0.0f);
    kernels::reference::gemm_nt(m, k, p, a.data(), bt.data(), ref.data());
    kernels::gemm_nt(m, k, p, a.data(), bt.data(), par.data());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(par[i] == doctest::Approx(ref[i]).epsilon(1e-5));

    std::vector<float> rt(k * p, 0.0f), pt(k * p, 0.0f);
    kernels::reference::gemm_tn(m, k, p, a.data(), g.data(), rt.data());
    kernels::gemm_tn(m, k, p, a.data(), g.data(), pt.data());
    for (std::size_t i = 0; i < rt.size(); ++i) CHECK(pt[i] == doctest::Approx(rt[i]).epsilon(1e-5));
  }
  CHECK(kernels::max_threads() >= 1);
}

TEST_CASE("softmax examples") {
  const Tensor<double> z({1, 4});
  const auto uniform = ops::softmax(z, 1);
  for (double v : uniform.vec()) CHECK(v == 0.25);
  const auto x = randn<double>({3, 5}, 1);
  Tensor<double> shifted = x;
  for (auto& v : shifted.vec()) v += 123.0;
  const auto a = ops::softmax(x, 1), b = ops::softmax(shifted, 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  const auto big = ops::softmax(Tensor<float>({1, 2}, {1000.0f, 0.0f}), 1);
  CHECK(big[0] == 1.0f);
  CHECK(big[1] == 0.0f);
}

TEST_CASE("layer_norm examples") {
  const Tensor<double> gamma({4}, {1, 1, 1, 1}), beta({4});
  const auto y = ops::layer_norm<double>(Tensor<double>({1, 4}, 3.0), gamma, beta, 1e-5, nullptr);
  for (double v : y.vec()) CHECK(v == 0.0);

  const auto x = randn<double>({5, 8}, 2, 3.0);
  const auto g = randn<double>({8}, 4), b = randn<double>({8}, 5);
  const auto out = ops::layer_norm<double>(x, g, b, 1e-9, nullptr);
  // recover xhat = (y - beta) / gamma and check its moments
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      const double xhat = (out[r * 8 + c] - b[c]) / g[c];
      m += xhat;
      v += xhat * xhat;
    }
    CHECK(std::abs(m / 8) < 1e-9);
    CHECK(v / 8 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("gelu examples") {
  const auto y = ops::gelu(Tensor<double>({3}, {0.0, 30.0, -10.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(30.0));
  CHECK(y[2] < 0.0);
  CHECK(y[2] > -1e-8);
}

TEST_CASE("batch_norm examples") {
  Tensor<double> gamma({3}, 1.0), beta({3}), rm({3}), rv({3}, 1.0);
  const auto x = randn<double>({6, 3}, 8, 2.0);
  const auto e = ops::batch_norm<double>(x, gamma, beta, rm, rv, Mode::Eval, 0.1, 0.0, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(e[i] == x[i]);

  const auto t = ops::batch_norm<double>(x, gamma, beta, rm, rv, Mode::Train, 0.1, 1e-5, nullptr);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0;
    for (std::size_t r = 0; r < 6; ++r) m += t[r * 3 + c];
    CHECK(std::abs(m / 6) < 1e-5);
  }
  try {
    ops::batch_norm<double>(Tensor<double>({1, 3}), gamma, beta, rm, rv, Mode::Train, 0.1, 1e-5, nullptr);
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::BatchTooSmall);
  }
}

TEST_CASE("dropout examples") {
  Rng rng(3);
  const auto x = randn<double>({4, 4}, 1);
  CHECK(ops::dropout<double>(x, 0.0, Mode::Train, rng, nullptr).vec() == x.vec());
  CHECK(ops::dropout<double>(x, 0.7, Mode::Eval, rng, nullptr).vec() == x.vec());

  const Tensor<double> ones({100000}, 1.0);
  const auto y = ops::dropout<double>(ones, 0.5, Mode::Train, rng, nullptr);
  double kept = 0, mean = 0;
  for (double v : y.vec()) {
    kept += v != 0.0;
    mean += v;
  }
  CHECK(std::abs(kept / 1e5 - 0.5) <= 0.01);
  CHECK(std::abs(mean / 1e5 - 1.0) <= 0.01);
}

TEST_CASE("depthwise conv examples") {
  const Tensor<double> x({3, 1}, {1, 2, 3}), k({3, 1}, {1, 1, 1});
  CHECK(ops::depthwise_conv1d(x, k).vec() == std::vector<double>{3, 6, 5});
  const auto xs = randn<double>({10, 4}, 2);
  Tensor<double> id({3, 4});
  for (std::size_t c = 0; c < 4; ++c) id[4 + c] = 1.0;
  CHECK(ops::depthwise_conv1d(xs, id).vec() == xs.vec());
  CHECK_THROWS_AS(ops::depthwise_conv1d(xs, Tensor<double>({2, 4})), Error);
}

TEST_CASE("grad check examples") {
  CHECK(run_grad_check_case("linear", true, 0, 1e-6).max_rel_err < 1e-6);
  CHECK(run_grad_check_case("bilcnet", true, 0, 1e-5).pass);
  for (const auto& name : grad_check_cases()) {
    CHECK_MESSAGE(!run_grad_check_case(name, true, 1, 1e-5, true).pass, name);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& name : {"matmul", "layer_norm", "depthwise_conv", "lstm_cell"}) {
      CHECK_MESSAGE(run_grad_check_case(name, true, seed, 1e-5).pass, name);
      CHECK_MESSAGE(run_grad_check_case(name, false, seed, 1e-3).pass, name);
    }
  }
  CHECK_THROWS_AS(run_grad_check_case("nope", true, 0, 1e-5), Error);
}
