// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "bilcnet/conformer.hpp"
#include "bilcnet/grad_check.hpp"
#include "support.hpp"

using namespace bilcnet;
using testing::randn;

namespace {

ConformerConfig small(std::size_t blocks = 1) {
  ConformerConfig c;
  c.model_dim = 8;
  c.num_heads = 2;
  c.num_blocks = blocks;
  c.ffn_expansion = 2;
  c.dropout = 0.0;
  return c;
}

void set_identity(Linear<double>& l) {
  l.weight.value.zero();
  l.bias.value.zero();
  for (std::size_t i = 0; i < l.in_features(); ++i) l.weight.value[i * l.out_features() + i] = 1.0;
}

}  // namespace

TEST_CASE("attention with zero query and key maps averages over time") {
  MultiHeadSelfAttention<double> attn("mhsa", 8, 2);
  Rng rng(1);
  attn.init(rng);
  attn.query.weight.value.zero();
  attn.query.bias.value.zero();
  attn.key.weight.value.zero();
  attn.key.bias.value.zero();
  set_identity(attn.value);
  set_identity(attn.output);
  const auto x = randn<double>({2, 5, 8}, 3);
  typename MultiHeadSelfAttention<double>::Cache cache;
  const auto y = attn.forward(x, &cache);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0;
      for (std::size_t t = 0; t < 5; ++t) mean += x[(n * 5 + t) * 8 + c];
      mean /= 5;
      for (std::size_t t = 0; t < 5; ++t) CHECK(y[(n * 5 + t) * 8 + c] == doctest::Approx(mean).epsilon(1e-12));
    }
  for (std::size_t r = 0; r < cache.weights.size() / 5; ++r) {
    double s = 0;
    for (std::size_t t = 0; t < 5; ++t) s += cache.weights[r * 5 + t];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("attention is permutation equivariant") {
  MultiHeadSelfAttention<double> attn("mhsa", 8, 2);
  Rng rng(2);
  attn.init(rng);
  const auto x = randn<double>({1, 5, 8}, 4);
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  Tensor<double> xp(x.shape());
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 8; ++c) xp[t * 8 + c] = x[perm[t] * 8 + c];
  const auto y = attn.forward(x, nullptr), yp = attn.forward(xp, nullptr);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 8; ++c) CHECK(yp[t * 8 + c] == doctest::Approx(y[perm[t] * 8 + c]).epsilon(1e-12));
}

TEST_CASE("conv module with zero output map") {
  ConvModule<double> conv("conv", 8, 3, 0.0);
  Rng rng(3);
  conv.init(rng);
  conv.pointwise_out.weight.value.zero();
  conv.pointwise_out.bias.value.zero();
  for (std::size_t t : {1, 4, 7}) {
    const auto x = randn<double>({2, t, 8}, t);
    const auto y = conv.forward(x, Mode::Train, rng, nullptr);
    CHECK(y.shape() == x.shape());
    for (double v : y.vec()) CHECK(v == 0.0);
  }
}

TEST_CASE("conv module gradient") {
  ConvModule<double> conv("conv", 8, 3, 0.0);
  Rng rng(5);
  conv.init(rng);
  ParamList<double> params;
  conv.collect(params);
  auto x = randn<double>({2, 4, 8}, 6);
  GradProbe<double> probe;
  probe.vars = {{"x", &x}};
  for (auto* p : params) probe.vars.emplace_back(p->name, &p->value);
  probe.forward = [&] { return conv.forward(x, Mode::Train, rng, nullptr); };
  probe.backward = [&](const Tensor<double>& gy) {
    for (auto* p : params) p->zero_grad();
    typename ConvModule<double>::Cache cache;
    conv.forward(x, Mode::Train, rng, &cache);
    std::vector<Tensor<double>> out = {conv.backward(gy, cache)};
    for (auto* p : params) out.push_back(p->grad);
    return out;
  };
  const auto r = grad_check(probe, 3);
  CHECK_MESSAGE(r.max_rel_err < 1e-5, r.worst_var);
}

TEST_CASE("zeroed block is the identity") {
  for (auto order : {BlockOrder::ConvFirst, BlockOrder::AttentionFirst}) {
    ConformerConfig c = small();
    c.order = order;
    ConformerBlock<double> block("blk", c);
    Rng rng(7);
    block.init(rng);
    block.zero_output_layers();
    const auto x = randn<double>({3, 6, 8}, 8);
    CHECK(block.forward(x, Mode::Train, rng, nullptr).vec() == x.vec());
  }
}

TEST_CASE("block with only the first feed-forward branch active") {
  ConformerBlock<double> block("blk", small());
  Rng rng(8);
  block.init(rng);
  block.zero_output_layers();
  block.ffn1.down.weight.value = randn<double>(block.ffn1.down.weight.value.shape(), 9, 0.2);
  block.ffn1.down.bias.value = randn<double>(block.ffn1.down.bias.value.shape(), 10, 0.2);
  const auto x = randn<double>({2, 5, 8}, 11);
  const auto f = block.ffn1.forward(x, Mode::Eval, rng, nullptr);
  const auto y = block.forward(x, Mode::Eval, rng, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] + 0.5 * f[i]).epsilon(1e-12));
}

TEST_CASE("stack") {
  Rng rng(12);
  ConformerStack<double> one("s", small(1));
  one.init(rng);
  ConformerBlock<double> block = one.blocks[0];
  const auto x = randn<double>({2, 5, 8}, 13);
  CHECK(one.forward(x, Mode::Eval, rng, nullptr).vec() == block.forward(x, Mode::Eval, rng, nullptr).vec());

  ConformerStack<double> three("s", small(3));
  three.init(rng);
  CHECK(three.forward(x, Mode::Eval, rng, nullptr).shape() == x.shape());
  for (auto& b : three.blocks) b.zero_output_layers();
  CHECK(three.forward(x, Mode::Eval, rng, nullptr).vec() == x.vec());
}

TEST_CASE("block gradient") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CHECK(run_grad_check_case("conformer_block", true, seed, 1e-5).pass);
    CHECK(run_grad_check_case("mhsa", true, seed, 1e-5).pass);
  }
}
