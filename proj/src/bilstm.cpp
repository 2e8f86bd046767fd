// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/bilstm.hpp"

#include <cmath>

#include "bilcnet/kernels.hpp"

namespace bilcnet {

void BiLstmConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || num_layers == 0) {
    fail(ErrorCode::InvalidConfig, "bilstm dimensions must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidProbability, "bilstm dropout");
}

template <typename T>
LstmParams<T>::LstmParams(const std::string& name, std::size_t in_dim, std::size_t hidden_dim)
    : in(in_dim),
      hidden(hidden_dim),
      w_ih(name + ".w_ih", {4 * hidden_dim, in_dim}),
      w_hh(name + ".w_hh", {4 * hidden_dim, hidden_dim}),
      b_ih(name + ".b_ih", {4 * hidden_dim}, false),
      b_hh(name + ".b_hh", {4 * hidden_dim}, false) {}

template <typename T>
void LstmParams<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  init_uniform(w_ih.value, bound, rng);
  init_uniform(w_hh.value, bound, rng);
  init_uniform(b_ih.value, bound, rng);
  init_uniform(b_hh.value, bound, rng);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) {
    b_ih.value[j] = T(1);
    b_hh.value[j] = T(0);
  }
}

template <typename T>
void LstmParams<T>::collect(ParamList<T>& out) {
  out.push_back(&w_ih);
  out.push_back(&w_hh);
  out.push_back(&b_ih);
  out.push_back(&b_hh);
}

namespace {

// Turns pre-activations [n x 4H] into activated gates in place and writes the
// new cell, tanh(cell) and hidden rows.
template <typename T>
void activate(T* pre, const T* c_prev, T* c, T* tanh_c, T* h, std::size_t n, std::size_t hid) {
  for (std::size_t b = 0; b < n; ++b) {
    T* g = pre + b * 4 * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      const T ig = ops::sigmoid(g[j]);
      const T fg = ops::sigmoid(g[hid + j]);
      const T cg = std::tanh(g[2 * hid + j]);
      const T og = ops::sigmoid(g[3 * hid + j]);
      g[j] = ig;
      g[hid + j] = fg;
      g[2 * hid + j] = cg;
      g[3 * hid + j] = og;
      const T cp = c_prev ? c_prev[b * hid + j] : T(0);
      const T cn = fg * cp + ig * cg;
      const T tc = std::tanh(cn);
      c[b * hid + j] = cn;
      tanh_c[b * hid + j] = tc;
      h[b * hid + j] = og * tc;
    }
  }
}

// dh, dc: total gradient arriving at h_t and c_t. Produces pre-activation
// gradient rows and dL/dc_{t-1}.
template <typename T>
void gate_backward(const T* dh, const T* dc_in, const T* gates, const T* c_prev, const T* tanh_c,
                   T* dpre, T* dc_prev, std::size_t n, std::size_t hid) {
  for (std::size_t b = 0; b < n; ++b) {
    const T* g = gates + b * 4 * hid;
    T* dp = dpre + b * 4 * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      const std::size_t k = b * hid + j;
      const T ig = g[j], fg = g[hid + j], cg = g[2 * hid + j], og = g[3 * hid + j];
      const T tc = tanh_c[k];
      const T d_o = dh[k] * tc;
      const T dc = dh[k] * og * (T(1) - tc * tc) + (dc_in ? dc_in[k] : T(0));
      const T cp = c_prev ? c_prev[k] : T(0);
      dp[j] = dc * cg * ig * (T(1) - ig);
      dp[hid + j] = dc * cp * fg * (T(1) - fg);
      dp[2 * hid + j] = dc * ig * (T(1) - cg * cg);
      dp[3 * hid + j] = d_o * og * (T(1) - og);
      dc_prev[k] = dc * fg;
    }
  }
}

template <typename T>
void add_biases(const LstmParams<T>& p, std::size_t rows, T* pre) {
  const std::size_t g4 = 4 * p.hidden;
  kernels::add_row_bias(rows, g4, p.b_ih.value.data(), pre);
  kernels::add_row_bias(rows, g4, p.b_hh.value.data(), pre);
}

}  // namespace

template <typename T>
LstmState<T> lstm_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                            const LstmParams<T>& params, LstmStepCache<T>* cache) {
  const std::size_t n = x.rows();
  const std::size_t hid = params.hidden;
  if (x.cols() != params.in) fail(ErrorCode::ShapeMismatch, "lstm step input width");
  require_shape(h_prev, {n, hid}, "lstm h_prev");
  require_shape(c_prev, {n, hid}, "lstm c_prev");
  Tensor<T> pre({n, 4 * hid});
  kernels::gemm_nt(n, params.in, 4 * hid, x.data(), params.w_ih.value.data(), pre.data());
  kernels::gemm_nt(n, hid, 4 * hid, h_prev.data(), params.w_hh.value.data(), pre.data());
  add_biases(params, n, pre.data());
  LstmState<T> out{Tensor<T>({n, hid}), Tensor<T>({n, hid})};
  Tensor<T> tanh_c({n, hid});
  activate(pre.data(), c_prev.data(), out.c.data(), tanh_c.data(), out.h.data(), n, hid);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gates = std::move(pre);
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

template <typename T>
LstmStepGrads<T> lstm_cell_step_backward(const Tensor<T>& gh, const Tensor<T>& gc,
                                         const LstmStepCache<T>& cache, LstmParams<T>& params) {
  const std::size_t n = cache.x.rows();
  const std::size_t hid = params.hidden;
  require_shape(gh, {n, hid}, "lstm step grad h");
  require_shape(gc, {n, hid}, "lstm step grad c");
  Tensor<T> dpre({n, 4 * hid});
  LstmStepGrads<T> g{Tensor<T>(cache.x.shape()), Tensor<T>({n, hid}), Tensor<T>({n, hid})};
  gate_backward(gh.data(), gc.data(), cache.gates.data(), cache.c_prev.data(), cache.tanh_c.data(),
                dpre.data(), g.c_prev.data(), n, hid);
  kernels::gemm_tn(n, 4 * hid, params.in, dpre.data(), cache.x.data(), params.w_ih.grad.data());
  kernels::gemm_tn(n, 4 * hid, hid, dpre.data(), cache.h_prev.data(), params.w_hh.grad.data());
  kernels::column_sums(n, 4 * hid, dpre.data(), params.b_ih.grad.data());
  kernels::column_sums(n, 4 * hid, dpre.data(), params.b_hh.grad.data());
  kernels::gemm_nn(n, 4 * hid, params.in, dpre.data(), params.w_ih.value.data(), g.x.data());
  kernels::gemm_nn(n, 4 * hid, hid, dpre.data(), params.w_hh.value.data(), g.h_prev.data());
  return g;
}

namespace {

// Runs one direction over x[n x T x in]; writes h into out[n x T x 2H] at
// column offset `offset`.
template <typename T>
void run_direction(const LstmParams<T>& p, const Tensor<T>& x, bool reverse, std::size_t offset,
                   Tensor<T>& out, typename BiLstm<T>::DirectionCache* cache) {
  const std::size_t n = x.dim(0), steps = x.dim(1), in = x.dim(2), hid = p.hidden;
  const std::size_t g4 = 4 * hid;
  const std::size_t width = out.dim(2);
  Tensor<T> xp({n * steps, g4});
  kernels::gemm_nt(n * steps, in, g4, x.data(), p.w_ih.value.data(), xp.data());
  add_biases(p, n * steps, xp.data());

  Tensor<T> h({n, hid}), c({n, hid});
  if (cache) {
    cache->gates.assign(steps, Tensor<T>());
    cache->c.assign(steps, Tensor<T>());
    cache->tanh_c.assign(steps, Tensor<T>());
    cache->h.assign(steps, Tensor<T>());
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    Tensor<T> pre({n, g4});
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = xp.data() + (b * steps + t) * g4;
      std::copy(src, src + g4, pre.data() + b * g4);
    }
    if (s > 0) kernels::gemm_nt(n, hid, g4, h.data(), p.w_hh.value.data(), pre.data());
    Tensor<T> c_new({n, hid}), tanh_c({n, hid}), h_new({n, hid});
    activate(pre.data(), s > 0 ? c.data() : nullptr, c_new.data(), tanh_c.data(), h_new.data(), n,
             hid);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(h_new.data() + b * hid, h_new.data() + (b + 1) * hid,
                out.data() + (b * steps + t) * width + offset);
    }
    if (cache) {
      cache->gates[t] = std::move(pre);
      cache->tanh_c[t] = std::move(tanh_c);
      cache->c[t] = c_new;
      cache->h[t] = h_new;
    }
    c = std::move(c_new);
    h = std::move(h_new);
  }
}

template <typename T>
void direction_backward(LstmParams<T>& p, const Tensor<T>& x, bool reverse, std::size_t offset,
                        const Tensor<T>& gout, const typename BiLstm<T>::DirectionCache& cache,
                        Tensor<T>& gx) {
  const std::size_t n = x.dim(0), steps = x.dim(1), in = x.dim(2), hid = p.hidden;
  const std::size_t g4 = 4 * hid;
  const std::size_t width = gout.dim(2);
  Tensor<T> dxp({n * steps, g4});
  Tensor<T> dh_next({n, hid}), dc_next({n, hid});
  Tensor<T> dh({n, hid}), dpre({n, g4}), dc_prev({n, hid});
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const bool has_prev = s > 0;
    const std::size_t tp = reverse ? t + 1 : t - 1;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = gout.data() + (b * steps + t) * width + offset;
      for (std::size_t j = 0; j < hid; ++j) dh[b * hid + j] = src[j] + dh_next[b * hid + j];
    }
    gate_backward(dh.data(), dc_next.data(), cache.gates[t].data(),
                  has_prev ? cache.c[tp].data() : nullptr, cache.tanh_c[t].data(), dpre.data(),
                  dc_prev.data(), n, hid);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(dpre.data() + b * g4, dpre.data() + (b + 1) * g4,
                dxp.data() + (b * steps + t) * g4);
    }
    dh_next.zero();
    if (has_prev) {
      kernels::gemm_tn(n, g4, hid, dpre.data(), cache.h[tp].data(), p.w_hh.grad.data());
      kernels::gemm_nn(n, g4, hid, dpre.data(), p.w_hh.value.data(), dh_next.data());
    }
    std::swap(dc_next, dc_prev);
  }
  kernels::column_sums(n * steps, g4, dxp.data(), p.b_ih.grad.data());
  kernels::column_sums(n * steps, g4, dxp.data(), p.b_hh.grad.data());
  kernels::gemm_tn(n * steps, g4, in, dxp.data(), x.data(), p.w_ih.grad.data());
  kernels::gemm_nn(n * steps, g4, in, dxp.data(), p.w_ih.value.data(), gx.data());
}

}  // namespace

template <typename T>
BiLstm<T>::BiLstm(const std::string& name, const BiLstmConfig& config) : config_(config) {
  config_.validate();
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::size_t in = l == 0 ? config_.input_dim : 2 * config_.hidden_dim;
    const std::string base = name + ".l" + std::to_string(l);
    layers.push_back({LstmParams<T>(base + ".fwd", in, config_.hidden_dim),
                      LstmParams<T>(base + ".bwd", in, config_.hidden_dim)});
  }
}

template <typename T>
void BiLstm<T>::init(Rng& rng) {
  for (auto& layer : layers) {
    layer[0].init(rng);
    layer[1].init(rng);
  }
}

template <typename T>
Tensor<T> BiLstm<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) const {
  if (x.rank() != 3 || x.dim(2) != config_.input_dim) {
    fail(ErrorCode::ShapeMismatch, "bilstm input " + shape_string(x.shape()) + ", expected [n x T x " +
                                       std::to_string(config_.input_dim) + "]");
  }
  const std::size_t n = x.dim(0), steps = x.dim(1), hid = config_.hidden_dim;
  if (cache) cache->layers.assign(layers.size(), LayerCache{});
  Tensor<T> input = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor<T> out({n, steps, 2 * hid});
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    run_direction(layers[l][0], input, false, 0, out, lc ? &lc->fwd : nullptr);
    run_direction(layers[l][1], input, true, hid, out, lc ? &lc->bwd : nullptr);
    if (lc) lc->input = std::move(input);
    if (l + 1 < layers.size()) {
      out = ops::dropout(out, config_.dropout, mode, rng, lc ? &lc->drop : nullptr);
    }
    input = std::move(out);
  }
  return input;
}

template <typename T>
Tensor<T> BiLstm<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = gy;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    if (l + 1 < layers.size()) g = ops::dropout_backward(g, lc.drop);
    Tensor<T> gx(lc.input.shape());
    direction_backward(layers[l][0], lc.input, false, 0, g, lc.fwd, gx);
    direction_backward(layers[l][1], lc.input, true, config_.hidden_dim, g, lc.bwd, gx);
    g = std::move(gx);
  }
  return g;
}

template <typename T>
void BiLstm<T>::collect(ParamList<T>& out) {
  for (auto& layer : layers) {
    layer[0].collect(out);
    layer[1].collect(out);
  }
}

template struct LstmParams<float>;
template struct LstmParams<double>;
template LstmState<float> lstm_cell_step(const Tensor<float>&, const Tensor<float>&,
                                         const Tensor<float>&, const LstmParams<float>&,
                                         LstmStepCache<float>*);
template LstmState<double> lstm_cell_step(const Tensor<double>&, const Tensor<double>&,
                                          const Tensor<double>&, const LstmParams<double>&,
                                          LstmStepCache<double>*);
template LstmStepGrads<float> lstm_cell_step_backward(const Tensor<float>&, const Tensor<float>&,
                                                      const LstmStepCache<float>&,
                                                      LstmParams<float>&);
template LstmStepGrads<double> lstm_cell_step_backward(const Tensor<double>&,
                                                       const Tensor<double>&,
                                                       const LstmStepCache<double>&,
                                                       LstmParams<double>&);
template class BiLstm<float>;
template class BiLstm<double>;

}  // namespace bilcnet
