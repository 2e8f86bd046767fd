// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "bilcnet/bilstm.hpp"
#include "bilcnet/conformer.hpp"
#include "bilcnet/error.hpp"
#include "bilcnet/model.hpp"
#include "bilcnet/train.hpp"

namespace bilcnet {

template <typename T>
GradCheckResult grad_check(GradProbe<T>& probe, std::uint64_t seed, bool flip_sign,
                           std::size_t max_coords_per_var) {
  const double step = std::is_same_v<T, float> ? kStepF32 : kStepF64;
  Rng rng(seed ^ 0x5DEECE66DULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  const Tensor<T> y0 = probe.forward();
  std::vector<double> r(y0.size());
  for (auto& v : r) v = unit(rng);
  Tensor<T> gy(y0.shape());
  for (std::size_t i = 0; i < r.size(); ++i) gy[i] = static_cast<T>(r[i]);
  // The projection is rounded to T so analytic and numeric paths see the same objective.
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(gy[i]);

  auto objective = [&]() {
    const Tensor<T> y = probe.forward();
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * static_cast<double>(y[i]);
    return s;
  };

  std::vector<Tensor<T>> analytic = probe.backward(gy);
  if (analytic.size() != probe.vars.size()) fail(ErrorCode::ShapeMismatch, "probe returned wrong grad count");
  if (flip_sign && !analytic.empty()) {
    for (auto& v : analytic.front().vec()) v = -v;
  }

  auto expected_zero = [&](const std::string& name) {
    return std::any_of(probe.zero_grad_suffixes.begin(), probe.zero_grad_suffixes.end(), [&](const std::string& s) {
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    });
  };

  struct VarStats {
    double max_diff = 0, max_a = 0, max_n = 0;
  };
  std::vector<VarStats> stats(probe.vars.size());
  double scale = 0;
  for (std::size_t k = 0; k < probe.vars.size(); ++k) {
    Tensor<T>& var = *probe.vars[k].second;
    const Tensor<T>& a = analytic[k];
    require_shape(a, var.shape(), probe.vars[k].first.c_str());

    std::vector<std::size_t> coords(var.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords_per_var) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_var);
    }
    VarStats& st = stats[k];
    for (std::size_t c : coords) {
      const T orig = var[c];
      auto at = [&](double offset) {
        var[c] = static_cast<T>(orig + offset);
        return objective();
      };
      // Seven-point stencil: sixth-order truncation error lets the step stay
      // wide enough that rounding in the objective is negligible.
      const double d1 = at(step) - at(-step);
      const double d2 = at(2 * step) - at(-2 * step);
      const double d3 = at(3 * step) - at(-3 * step);
      const double numeric = (45 * d1 - 9 * d2 + d3) / (60 * step);
      var[c] = orig;
      const double av = static_cast<double>(a[c]);
      st.max_diff = std::max(st.max_diff, std::abs(av - numeric));
      st.max_a = std::max(st.max_a, std::abs(av));
      st.max_n = std::max(st.max_n, std::abs(numeric));
    }
    if (!expected_zero(probe.vars[k].first)) scale = std::max({scale, st.max_a, st.max_n});
  }

  // Single-precision outputs carry rounding noise near 1e-4 of the op's
  // gradient scale after differencing; vars far below that scale are
  // compared in absolute terms.
  const double noise_floor = std::is_same_v<T, float> ? kF32ScaleFloor : 0.0;
  GradCheckResult result;
  for (std::size_t k = 0; k < probe.vars.size(); ++k) {
    const VarStats& st = stats[k];
    const double rel = expected_zero(probe.vars[k].first)
                           ? std::max(st.max_a, st.max_n) / std::max(scale, 1e-8)
                           : st.max_diff / std::max({st.max_a, st.max_n, noise_floor * scale, 1e-8});
    if (rel >= result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_var = probe.vars[k].first;
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(GradProbe<float>&, std::uint64_t, bool, std::size_t);
template GradCheckResult grad_check<double>(GradProbe<double>&, std::uint64_t, bool, std::size_t);

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> n(0.0, sd);
  for (auto& v : t.vec()) v = static_cast<T>(n(rng));
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename T>
void add_params(GradProbe<T>& probe, const ParamList<T>& params) {
  for (auto* p : params) probe.vars.emplace_back(p->name, &p->value);
}

template <typename T>
void jitter(const ParamList<T>& params, Rng& rng, double sd = 0.1) {
  std::normal_distribution<double> n(0.0, sd);
  for (auto* p : params)
    for (auto& v : p->value.vec()) v = static_cast<T>(v + n(rng));
}

template <typename T>
std::vector<Tensor<T>> with_param_grads(Tensor<T> gx, const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  out.push_back(std::move(gx));
  for (auto* p : params) out.push_back(p->grad);
  return out;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
GradCheckResult case_matmul(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const std::size_t m = pick(rng, 2, 5), k = pick(rng, 2, 6), n = pick(rng, 2, 5);
  Tensor<T> a = random_tensor<T>({m, k}, rng), b = random_tensor<T>({k, n}, rng);
  GradProbe<T> p;
  p.vars = {{"a", &a}, {"b", &b}};
  p.forward = [&] { return ops::matmul(a, b); };
  p.backward = [&](const Tensor<T>& gy) {
    Tensor<T> ga(a.shape()), gb(b.shape());
    ops::matmul_backward(a, b, gy, &ga, &gb);
    return std::vector<Tensor<T>>{ga, gb};
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_linear(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  Linear<T> lin("lin", pick(rng, 2, 6), pick(rng, 2, 6));
  lin.init(rng);
  ParamList<T> params;
  lin.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 3), pick(rng, 2, 4), lin.in_features()}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.forward = [&] { return lin.forward(x); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    return with_param_grads(lin.backward(x, gy), params);
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_softmax(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  Tensor<T> x = random_tensor<T>({pick(rng, 2, 3), pick(rng, 2, 4), pick(rng, 2, 6)}, rng, 2.0);
  const std::size_t axis = pick(rng, 0, 2);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  p.forward = [&] { return ops::softmax(x, axis); };
  p.backward = [&](const Tensor<T>& gy) {
    return std::vector<Tensor<T>>{ops::softmax_backward(ops::softmax(x, axis), gy, axis)};
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_layer_norm(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  LayerNorm<T> ln("ln", pick(rng, 3, 8));
  ParamList<T> params;
  ln.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 4), ln.gamma.value.size()}, rng, 2.0);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.forward = [&] { return ln.forward(x, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    ops::LayerNormCache<T> cache;
    ln.forward(x, &cache);
    return with_param_grads(ln.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip);
}

template <typename T, Tensor<T> (*Fwd)(const Tensor<T>&), Tensor<T> (*Bwd)(const Tensor<T>&, const Tensor<T>&)>
GradCheckResult case_elementwise(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const std::size_t cols = pick(rng, 1, 4) * 2;
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 4), cols}, rng, 1.5);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  p.forward = [&] { return Fwd(x); };
  p.backward = [&](const Tensor<T>& gy) { return std::vector<Tensor<T>>{Bwd(x, gy)}; };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_batch_norm(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  BatchNorm<T> bn("bn", pick(rng, 2, 6));
  ParamList<T> params;
  bn.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 3, 6), bn.gamma.value.size()}, rng, 2.0);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.forward = [&] { return bn.forward(x, Mode::Train, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    ops::BatchNormCache<T> cache;
    bn.forward(x, Mode::Train, &cache);
    return with_param_grads(bn.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_depthwise_conv(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const std::size_t k = pick(rng, 0, 2) * 2 + 1;
  const std::size_t c = pick(rng, 1, 4);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 3), pick(rng, 2, 7), c}, rng);
  Tensor<T> w = random_tensor<T>({k, c}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}, {"kernel", &w}};
  p.forward = [&] { return ops::depthwise_conv1d(x, w); };
  p.backward = [&](const Tensor<T>& gy) {
    Tensor<T> gw(w.shape());
    Tensor<T> gx = ops::depthwise_conv1d_backward(x, w, gy, &gw);
    return std::vector<Tensor<T>>{gx, gw};
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_lstm_cell(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const std::size_t n = pick(rng, 1, 3), in = pick(rng, 2, 5), h = pick(rng, 2, 4);
  LstmParams<T> lp("cell", in, h);
  lp.init(rng);
  ParamList<T> params;
  lp.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({n, in}, rng), hp = random_tensor<T>({n, h}, rng, 0.5),
            cp = random_tensor<T>({n, h}, rng, 0.5);
  auto pack = [&](const LstmState<T>& s) {
    Tensor<T> y({n, 2 * h});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        y.at(i, j) = s.h.at(i, j);
        y.at(i, h + j) = s.c.at(i, j);
      }
    return y;
  };
  GradProbe<T> p;
  p.vars = {{"x", &x}, {"h_prev", &hp}, {"c_prev", &cp}};
  add_params(p, params);
  p.forward = [&] { return pack(lstm_cell_step<T>(x, hp, cp, lp, nullptr)); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    LstmStepCache<T> cache;
    lstm_cell_step(x, hp, cp, lp, &cache);
    Tensor<T> gh({n, h}), gc({n, h});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        gh.at(i, j) = gy.at(i, j);
        gc.at(i, j) = gy.at(i, h + j);
      }
    auto g = lstm_cell_step_backward(gh, gc, cache, lp);
    std::vector<Tensor<T>> out{g.x, g.h_prev, g.c_prev};
    for (auto* prm : params) out.push_back(prm->grad);
    return out;
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_bilstm(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  BiLstmConfig cfg;
  cfg.input_dim = pick(rng, 2, 4);
  cfg.hidden_dim = pick(rng, 2, 3);
  cfg.num_layers = 2;
  cfg.dropout = 0.0;
  BiLstm<T> net("bilstm", cfg);
  net.init(rng);
  ParamList<T> params;
  net.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 2), pick(rng, 2, 4), cfg.input_dim}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.forward = [&] { return net.forward(x, Mode::Train, rng, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    typename BiLstm<T>::Cache cache;
    net.forward(x, Mode::Train, rng, &cache);
    return with_param_grads(net.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip, 24);
}

ConformerConfig tiny_conformer(Rng& rng) {
  ConformerConfig c;
  c.num_heads = pick(rng, 1, 2);
  c.model_dim = 4 * c.num_heads;
  c.num_blocks = 1;
  c.ffn_expansion = 2;
  c.conv_kernel = 3;
  c.dropout = 0.0;
  c.order = pick(rng, 0, 1) ? BlockOrder::ConvFirst : BlockOrder::AttentionFirst;
  return c;
}

template <typename T>
GradCheckResult case_mhsa(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const ConformerConfig c = tiny_conformer(rng);
  MultiHeadSelfAttention<T> attn("mhsa", c.model_dim, c.num_heads);
  attn.init(rng);
  ParamList<T> params;
  attn.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 2), pick(rng, 2, 4), c.model_dim}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.zero_grad_suffixes = {"w_k.bias"};
  p.forward = [&] { return attn.forward(x, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    typename MultiHeadSelfAttention<T>::Cache cache;
    attn.forward(x, &cache);
    return with_param_grads(attn.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip, 24);
}

template <typename T>
GradCheckResult case_conformer_block(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const ConformerConfig c = tiny_conformer(rng);
  ConformerBlock<T> block("blk", c);
  block.init(rng);
  ParamList<T> params;
  block.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({2, pick(rng, 2, 4), c.model_dim}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.zero_grad_suffixes = {"w_k.bias"};
  p.forward = [&] { return block.forward(x, Mode::Train, rng, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    typename ConformerBlock<T>::Cache cache;
    block.forward(x, Mode::Train, rng, &cache);
    return with_param_grads(block.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip, 16);
}

template <typename T>
GradCheckResult case_attention_pool(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  AttentionPool<T> pool("pool", pick(rng, 2, 6));
  pool.init(rng);
  ParamList<T> params;
  pool.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 1, 3), pick(rng, 2, 5), pool.score.in_features()}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.zero_grad_suffixes = {"score.bias"};
  p.forward = [&] { return pool.forward(x, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    typename AttentionPool<T>::Cache cache;
    pool.forward(x, &cache);
    return with_param_grads(pool.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_classifier_head(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  ClassifierHead<T> head("head", pick(rng, 2, 6), pick(rng, 2, 6), kNumClasses, 0.0);
  head.init(rng);
  ParamList<T> params;
  head.collect(params);
  jitter(params, rng);
  Tensor<T> x = random_tensor<T>({pick(rng, 6, 8), head.fc1.in_features()}, rng);
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.zero_grad_suffixes = {"fc1.bias"};
  p.forward = [&] { return head.forward(x, Mode::Train, rng, nullptr); };
  p.backward = [&](const Tensor<T>& gy) {
    zero_grads(params);
    typename ClassifierHead<T>::Cache cache;
    head.forward(x, Mode::Train, rng, &cache);
    return with_param_grads(head.backward(gy, cache), params);
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_cross_entropy(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  const std::size_t n = pick(rng, 1, 5);
  Tensor<T> logits = random_tensor<T>({n, kNumClasses}, rng, 2.0);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(pick(rng, 0, kNumClasses - 1));
  GradProbe<T> p;
  p.vars = {{"logits", &logits}};
  p.forward = [&] { return Tensor<T>({1}, static_cast<T>(cross_entropy<T>(logits, labels, nullptr))); };
  p.backward = [&](const Tensor<T>& gy) {
    Tensor<T> g;
    cross_entropy<T>(logits, labels, &g);
    return std::vector<Tensor<T>>{ops::scaled(g, gy[0])};
  };
  return grad_check(p, seed, flip);
}

template <typename T>
GradCheckResult case_bilcnet(std::uint64_t seed, bool flip) {
  Rng rng(seed);
  BiLCNetConfig cfg;
  cfg.bilstm.input_dim = 3;
  cfg.bilstm.hidden_dim = 2;
  cfg.bilstm.num_layers = 1;
  cfg.bilstm.dropout = 0.0;
  cfg.conformer = tiny_conformer(rng);
  cfg.conformer.num_heads = 1;
  cfg.conformer.model_dim = 4;
  cfg.classifier_hidden = 3;
  cfg.dropout = 0.0;
  BiLCNet<T> net(cfg);
  net.init(rng);
  ParamList<T> params = net.parameters();
  jitter(params, rng);
  const std::size_t n = 3;
  Tensor<T> x = random_tensor<T>({n, 3, cfg.bilstm.input_dim}, rng);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(pick(rng, 0, kNumClasses - 1));
  GradProbe<T> p;
  p.vars = {{"x", &x}};
  add_params(p, params);
  p.zero_grad_suffixes = {"w_k.bias", "score.bias", "fc1.bias", "b0.ffn2.down.bias"};
  p.forward = [&] {
    const Tensor<T> logits = net.forward(x, Mode::Train, rng, nullptr);
    return Tensor<T>({1}, static_cast<T>(cross_entropy<T>(logits, labels, nullptr)));
  };
  p.backward = [&](const Tensor<T>& gy) {
    net.zero_grad();
    typename BiLCNet<T>::Cache cache;
    const Tensor<T> logits = net.forward(x, Mode::Train, rng, &cache);
    Tensor<T> g;
    cross_entropy<T>(logits, labels, &g);
    return with_param_grads(net.backward(ops::scaled(g, gy[0]), cache), params);
  };
  return grad_check(p, seed, flip, 8);
}

template <typename T>
using CaseFn = GradCheckResult (*)(std::uint64_t, bool);

template <typename T>
GradCheckResult case_gelu(std::uint64_t s, bool f) {
  return case_elementwise<T, &ops::gelu<T>, &ops::gelu_backward<T>>(s, f);
}
template <typename T>
GradCheckResult case_swish(std::uint64_t s, bool f) {
  return case_elementwise<T, &ops::swish<T>, &ops::swish_backward<T>>(s, f);
}
template <typename T>
GradCheckResult case_glu(std::uint64_t s, bool f) {
  return case_elementwise<T, &ops::glu<T>, &ops::glu_backward<T>>(s, f);
}

template <typename T>
const std::map<std::string, CaseFn<T>>& case_table() {
  static const std::map<std::string, CaseFn<T>> table = {
      {"matmul", &case_matmul<T>},
      {"linear", &case_linear<T>},
      {"softmax", &case_softmax<T>},
      {"layer_norm", &case_layer_norm<T>},
      {"gelu", &case_gelu<T>},
      {"swish", &case_swish<T>},
      {"glu", &case_glu<T>},
      {"batch_norm", &case_batch_norm<T>},
      {"depthwise_conv", &case_depthwise_conv<T>},
      {"lstm_cell", &case_lstm_cell<T>},
      {"bilstm", &case_bilstm<T>},
      {"mhsa", &case_mhsa<T>},
      {"conformer_block", &case_conformer_block<T>},
      {"attention_pool", &case_attention_pool<T>},
      {"classifier_head", &case_classifier_head<T>},
      {"cross_entropy", &case_cross_entropy<T>},
      {"bilcnet", &case_bilcnet<T>},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& grad_check_cases() {
  static const std::vector<std::string> names = {
      "matmul", "linear", "softmax", "layer_norm", "gelu", "swish", "glu", "batch_norm", "depthwise_conv",
      "lstm_cell", "bilstm", "mhsa", "conformer_block", "attention_pool", "classifier_head",
      "cross_entropy", "bilcnet"};
  return names;
}

GradCheckReport run_grad_check_case(const std::string& name, bool f64, std::uint64_t seed, double tol,
                                    bool flip_sign) {
  GradCheckResult r;
  if (f64) {
    const auto& table = case_table<double>();
    const auto it = table.find(name);
    if (it == table.end()) fail(ErrorCode::InvalidConfig, "unknown grad check case " + name);
    r = it->second(seed, flip_sign);
  } else {
    const auto& table = case_table<float>();
    const auto it = table.find(name);
    if (it == table.end()) fail(ErrorCode::InvalidConfig, "unknown grad check case " + name);
    r = it->second(seed, flip_sign);
  }
  GradCheckReport rep;
  rep.name = name;
  rep.precision = f64 ? "f64" : "f32";
  rep.max_rel_err = r.max_rel_err;
  rep.tol = tol;
  rep.pass = std::isfinite(r.max_rel_err) && r.max_rel_err < tol;
  rep.worst_var = r.worst_var;
  return rep;
}

bool grad_check_has_f32(const std::string& name) { return name != "bilstm" && name != "bilcnet"; }

std::vector<GradCheckReport> run_grad_check_suite(const GradCheckOptions& o) {
  std::vector<GradCheckReport> out;
  for (const auto& name : grad_check_cases()) {
    for (bool f64 : {true, false}) {
      if (!f64 && !(o.include_f32 && grad_check_has_f32(name))) continue;
      const double tol = f64 ? o.tol_f64 : o.tol_f32;
      GradCheckReport worst;
      for (std::size_t s = 0; s < std::max<std::size_t>(o.seeds, 1); ++s) {
        GradCheckReport r = run_grad_check_case(name, f64, o.seed + s, tol, o.flip_sign);
        if (s == 0 || !(r.max_rel_err <= worst.max_rel_err)) worst = r;
      }
      out.push_back(worst);
    }
  }
  return out;
}

}  // namespace bilcnet
