// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/conformer.hpp"

#include <cmath>

namespace bilcnet {

void ConformerConfig::validate() const {
  if (model_dim == 0 || num_blocks == 0 || num_heads == 0 || ffn_expansion == 0) {
    fail(ErrorCode::InvalidConfig, "conformer dimensions must be >= 1");
  }
  if (model_dim % num_heads != 0) {
    fail(ErrorCode::InvalidConfig, "model_dim " + std::to_string(model_dim) +
                                       " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (conv_kernel % 2 == 0) fail(ErrorCode::EvenKernel, "conv_kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidProbability, "conformer dropout");
}

// ---- FeedForward ------------------------------------------------------------

template <typename T>
FeedForward<T>::FeedForward(const std::string& name, std::size_t dim, std::size_t expansion,
                            double dropout)
    : norm(name + ".ln", dim),
      up(name + ".up", dim, dim * expansion),
      down(name + ".down", dim * expansion, dim),
      dropout_(dropout) {}

template <typename T>
void FeedForward<T>::init(Rng& rng) {
  up.init(rng);
  down.init(rng);
}

template <typename T>
Tensor<T> FeedForward<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) const {
  Tensor<T> normed = norm.forward(x, cache ? &cache->ln : nullptr);
  Tensor<T> hidden = up.forward(normed);
  Tensor<T> activated = ops::gelu(hidden);
  Tensor<T> out = down.forward(activated);
  out = ops::dropout(out, dropout_, mode, rng, cache ? &cache->drop : nullptr);
  if (cache) {
    cache->normed = std::move(normed);
    cache->hidden = std::move(hidden);
    cache->activated = std::move(activated);
  }
  return out;
}

template <typename T>
Tensor<T> FeedForward<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = ops::dropout_backward(gy, cache.drop);
  g = down.backward(cache.activated, g);
  g = ops::gelu_backward(cache.hidden, g);
  g = up.backward(cache.normed, g);
  return norm.backward(g, cache.ln);
}

template <typename T>
void FeedForward<T>::collect(ParamList<T>& out) {
  norm.collect(out);
  up.collect(out);
  down.collect(out);
}

// ---- ConvModule ---------------------------------------------------------------

template <typename T>
ConvModule<T>::ConvModule(const std::string& name, std::size_t dim, std::size_t kernel,
                          double dropout)
    : norm(name + ".ln", dim),
      pointwise_in(name + ".pw_in", dim, 2 * dim),
      depthwise(name + ".depthwise", {kernel, dim}),
      batch_norm(name + ".bn", dim),
      pointwise_out(name + ".pw_out", dim, dim),
      dropout_(dropout) {}

template <typename T>
void ConvModule<T>::init(Rng& rng) {
  pointwise_in.init(rng);
  init_uniform(depthwise.value, 1.0 / std::sqrt(static_cast<double>(depthwise.value.dim(0))), rng);
  pointwise_out.init(rng);
}

template <typename T>
Tensor<T> ConvModule<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) {
  if (x.rank() != 3) fail(ErrorCode::ShapeMismatch, "conv module expects [n x T x d]");
  Tensor<T> normed = norm.forward(x, cache ? &cache->ln : nullptr);
  Tensor<T> expanded = pointwise_in.forward(normed);
  Tensor<T> gated = ops::glu(expanded);
  Tensor<T> conv = ops::depthwise_conv1d(gated, depthwise.value);
  Tensor<T> bn_out = batch_norm.forward(conv.reshaped({x.dim(0) * x.dim(1), x.dim(2)}), mode,
                                        cache ? &cache->bn : nullptr);
  bn_out.reshape(x.shape());
  Tensor<T> activated = ops::swish(bn_out);
  Tensor<T> out = pointwise_out.forward(activated);
  out = ops::dropout(out, dropout_, mode, rng, cache ? &cache->drop : nullptr);
  if (cache) {
    cache->normed = std::move(normed);
    cache->expanded = std::move(expanded);
    cache->gated = std::move(gated);
    cache->conv = std::move(conv);
    cache->bn_out = std::move(bn_out);
    cache->activated = std::move(activated);
  }
  return out;
}

template <typename T>
Tensor<T> ConvModule<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  const Shape shape = gy.shape();
  Tensor<T> g = ops::dropout_backward(gy, cache.drop);
  g = pointwise_out.backward(cache.activated, g);
  g = ops::swish_backward(cache.bn_out, g);
  g = batch_norm.backward(std::move(g).reshaped({shape[0] * shape[1], shape[2]}), cache.bn);
  g.reshape(shape);
  g = ops::depthwise_conv1d_backward(cache.gated, depthwise.value, g, &depthwise.grad);
  g = ops::glu_backward(cache.expanded, g);
  g = pointwise_in.backward(cache.normed, g);
  return norm.backward(g, cache.ln);
}

template <typename T>
void ConvModule<T>::collect(ParamList<T>& out) {
  norm.collect(out);
  pointwise_in.collect(out);
  out.push_back(&depthwise);
  batch_norm.collect(out);
  pointwise_out.collect(out);
}

template <typename T>
void ConvModule<T>::collect_buffers(BufferList<T>& out) {
  batch_norm.collect_buffers(out);
}

// ---- MultiHeadSelfAttention ---------------------------------------------------

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(const std::string& name, std::size_t dim,
                                                  std::size_t heads)
    : query(name + ".w_q", dim, dim),
      key(name + ".w_k", dim, dim),
      value(name + ".w_v", dim, dim),
      output(name + ".w_o", dim, dim),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    fail(ErrorCode::ShapeMismatch, "model dim " + std::to_string(dim) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  }
}

template <typename T>
void MultiHeadSelfAttention<T>::init(Rng& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
  output.init(rng);
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::forward(const Tensor<T>& x, Cache* cache) const {
  if (x.rank() != 3 || x.dim(2) != query.in_features()) {
    fail(ErrorCode::ShapeMismatch, "mhsa input " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), steps = x.dim(1), d = x.dim(2), dk = d / heads_;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Tensor<T> q = query.forward(x), k = key.forward(x), v = value.forward(x);
  Tensor<T> concat({n, steps, d});
  Tensor<T> weights({n, heads_, steps, steps});
  std::vector<T> row(steps);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * dk;
      T* w = weights.data() + ((b * heads_ + h) * steps) * steps;
      for (std::size_t i = 0; i < steps; ++i) {
        const T* qi = q.data() + (b * steps + i) * d + off;
        T mx = T(0);
        for (std::size_t j = 0; j < steps; ++j) {
          const T* kj = k.data() + (b * steps + j) * d + off;
          T s = 0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          row[j] = s * scale;
          mx = j == 0 ? row[j] : std::max(mx, row[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < steps; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        T* out = concat.data() + (b * steps + i) * d + off;
        for (std::size_t j = 0; j < steps; ++j) {
          const T a = row[j] / sum;
          w[i * steps + j] = a;
          const T* vj = v.data() + (b * steps + j) * d + off;
          for (std::size_t c = 0; c < dk; ++c) out[c] += a * vj[c];
        }
      }
    }
  }
  Tensor<T> y = output.forward(concat);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
    cache->weights = std::move(weights);
  }
  return y;
}

template <typename T>
Tensor<T> MultiHeadSelfAttention<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  const std::size_t n = cache.input.dim(0), steps = cache.input.dim(1), d = cache.input.dim(2);
  const std::size_t dk = d / heads_;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Tensor<T> gconcat = output.backward(cache.concat, gy);
  Tensor<T> gq(cache.q.shape()), gk(cache.k.shape()), gv(cache.v.shape());
  std::vector<T> ga(steps), gs(steps);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * dk;
      const T* w = cache.weights.data() + ((b * heads_ + h) * steps) * steps;
      for (std::size_t i = 0; i < steps; ++i) {
        const T* go = gconcat.data() + (b * steps + i) * d + off;
        // dA[i, j] = dO_i . V_j ; dV_j += A[i, j] dO_i
        T dot = 0;
        for (std::size_t j = 0; j < steps; ++j) {
          const T* vj = cache.v.data() + (b * steps + j) * d + off;
          T* gvj = gv.data() + (b * steps + j) * d + off;
          T s = 0;
          for (std::size_t c = 0; c < dk; ++c) {
            s += go[c] * vj[c];
            gvj[c] += w[i * steps + j] * go[c];
          }
          ga[j] = s;
          dot += s * w[i * steps + j];
        }
        for (std::size_t j = 0; j < steps; ++j) gs[j] = w[i * steps + j] * (ga[j] - dot) * scale;
        const T* qi = cache.q.data() + (b * steps + i) * d + off;
        T* gqi = gq.data() + (b * steps + i) * d + off;
        for (std::size_t j = 0; j < steps; ++j) {
          const T* kj = cache.k.data() + (b * steps + j) * d + off;
          T* gkj = gk.data() + (b * steps + j) * d + off;
          for (std::size_t c = 0; c < dk; ++c) {
            gqi[c] += gs[j] * kj[c];
            gkj[c] += gs[j] * qi[c];
          }
        }
      }
    }
  }
  Tensor<T> gx = query.backward(cache.input, gq);
  ops::add_inplace(gx, key.backward(cache.input, gk));
  ops::add_inplace(gx, value.backward(cache.input, gv));
  return gx;
}

template <typename T>
void MultiHeadSelfAttention<T>::collect(ParamList<T>& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

// ---- ConformerBlock -------------------------------------------------------------

template <typename T>
ConformerBlock<T>::ConformerBlock(const std::string& name, const ConformerConfig& config)
    : ffn1(name + ".ffn1", config.model_dim, config.ffn_expansion, config.dropout),
      conv(name + ".conv", config.model_dim, config.conv_kernel, config.dropout),
      attn_norm(name + ".mhsa.ln", config.model_dim),
      attention(name + ".mhsa", config.model_dim, config.num_heads),
      ffn2(name + ".ffn2", config.model_dim, config.ffn_expansion, config.dropout),
      config_(config) {
  config_.validate();
}

template <typename T>
void ConformerBlock<T>::init(Rng& rng) {
  ffn1.init(rng);
  conv.init(rng);
  attention.init(rng);
  ffn2.init(rng);
}

template <typename T>
Tensor<T> ConformerBlock<T>::attention_branch(const Tensor<T>& x, Mode mode, Rng& rng,
                                              Cache* cache) const {
  Tensor<T> normed = attn_norm.forward(x, cache ? &cache->attn_ln : nullptr);
  Tensor<T> a = attention.forward(normed, cache ? &cache->attn : nullptr);
  return ops::dropout(a, config_.dropout, mode, rng, cache ? &cache->attn_drop : nullptr);
}

template <typename T>
Tensor<T> ConformerBlock<T>::attention_branch_backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = ops::dropout_backward(gy, cache.attn_drop);
  g = attention.backward(g, cache.attn);
  return attn_norm.backward(g, cache.attn_ln);
}

template <typename T>
Tensor<T> ConformerBlock<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) {
  Tensor<T> h = x;
  ops::add_inplace(h, ffn1.forward(x, mode, rng, cache ? &cache->ffn1 : nullptr), T(0.5));
  if (config_.order == BlockOrder::ConvFirst) {
    ops::add_inplace(h, conv.forward(h, mode, rng, cache ? &cache->conv : nullptr));
    ops::add_inplace(h, attention_branch(h, mode, rng, cache));
  } else {
    ops::add_inplace(h, attention_branch(h, mode, rng, cache));
    ops::add_inplace(h, conv.forward(h, mode, rng, cache ? &cache->conv : nullptr));
  }
  ops::add_inplace(h, ffn2.forward(h, mode, rng, cache ? &cache->ffn2 : nullptr), T(0.5));
  return h;
}

template <typename T>
Tensor<T> ConformerBlock<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = gy;
  ops::add_inplace(g, ffn2.backward(ops::scaled(gy, T(0.5)), cache.ffn2));
  if (config_.order == BlockOrder::ConvFirst) {
    ops::add_inplace(g, attention_branch_backward(g, cache));
    ops::add_inplace(g, conv.backward(g, cache.conv));
  } else {
    ops::add_inplace(g, conv.backward(g, cache.conv));
    ops::add_inplace(g, attention_branch_backward(g, cache));
  }
  ops::add_inplace(g, ffn1.backward(ops::scaled(g, T(0.5)), cache.ffn1));
  return g;
}

template <typename T>
void ConformerBlock<T>::collect(ParamList<T>& out) {
  ffn1.collect(out);
  conv.collect(out);
  attn_norm.collect(out);
  attention.collect(out);
  ffn2.collect(out);
}

template <typename T>
void ConformerBlock<T>::collect_buffers(BufferList<T>& out) {
  conv.collect_buffers(out);
}

template <typename T>
void ConformerBlock<T>::zero_output_layers() {
  ffn1.down.zero_output();
  conv.pointwise_out.zero_output();
  attention.output.zero_output();
  ffn2.down.zero_output();
}

// ---- ConformerStack -------------------------------------------------------------

template <typename T>
ConformerStack<T>::ConformerStack(const std::string& name, const ConformerConfig& config) {
  config.validate();
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    blocks.emplace_back(name + ".b" + std::to_string(b), config);
  }
}

template <typename T>
void ConformerStack<T>::init(Rng& rng) {
  for (auto& b : blocks) b.init(rng);
}

template <typename T>
Tensor<T> ConformerStack<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) {
  if (cache) cache->blocks.assign(blocks.size(), typename ConformerBlock<T>::Cache{});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i].forward(h, mode, rng, cache ? &cache->blocks[i] : nullptr);
  }
  return h;
}

template <typename T>
Tensor<T> ConformerStack<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = gy;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g, cache.blocks[i]);
  return g;
}

template <typename T>
void ConformerStack<T>::collect(ParamList<T>& out) {
  for (auto& b : blocks) b.collect(out);
}

template <typename T>
void ConformerStack<T>::collect_buffers(BufferList<T>& out) {
  for (auto& b : blocks) b.collect_buffers(out);
}

template class FeedForward<float>;
template class FeedForward<double>;
template class ConvModule<float>;
template class ConvModule<double>;
template class MultiHeadSelfAttention<float>;
template class MultiHeadSelfAttention<double>;
template class ConformerBlock<float>;
template class ConformerBlock<double>;
template class ConformerStack<float>;
template class ConformerStack<double>;

}  // namespace bilcnet
