// SPDX-License-Identifier: Apache-2.0
//
// Conformer blocks over [n x T x d] sequences. The default block order is
//
//   h1  = x  + 1/2 * FFN(LN(x))
//   h2  = h1 + Conv(LN(h1))
//   h3  = h2 + MHSA(LN(h2))
//   out = h3 + 1/2 * FFN(LN(h3))
//
// with BlockOrder::AttentionFirst swapping the middle two branches. No
// positional terms appear anywhere in a block, so a block is equivariant to
// permutations of the time axis.

#pragma once

#include <string>
#include <vector>

#include "bilcnet/layers.hpp"

namespace bilcnet {

enum class BlockOrder { ConvFirst, AttentionFirst };

struct ConformerConfig {
  std::size_t model_dim = 128;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_expansion = 4;
  std::size_t conv_kernel = 3;
  double dropout = 0.1;
  BlockOrder order = BlockOrder::ConvFirst;

  void validate() const;
};

/// LN -> Linear d->rd -> GELU -> Linear rd->d -> dropout
template <typename T>
class FeedForward {
 public:
  struct Cache {
    ops::LayerNormCache<T> ln;
    Tensor<T> normed, hidden, activated;
    ops::DropoutMask<T> drop;
  };

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t expansion, double dropout);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);

  LayerNorm<T> norm;
  Linear<T> up;
  Linear<T> down;

 private:
  double dropout_ = 0.0;
};

/// LN -> pointwise d->2d -> GLU -> depthwise conv -> BatchNorm -> Swish ->
/// pointwise d->d -> dropout
template <typename T>
class ConvModule {
 public:
  struct Cache {
    ops::LayerNormCache<T> ln;
    Tensor<T> normed, expanded, gated, conv, bn_out, activated;
    ops::BatchNormCache<T> bn;
    ops::DropoutMask<T> drop;
  };

  ConvModule() = default;
  ConvModule(const std::string& name, std::size_t dim, std::size_t kernel, double dropout);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache);
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  LayerNorm<T> norm;
  Linear<T> pointwise_in;
  Parameter<T> depthwise;  // [k x d]
  BatchNorm<T> batch_norm;
  Linear<T> pointwise_out;

 private:
  double dropout_ = 0.0;
};

/// Multi-head scaled dot-product self-attention without masking. Per-head
/// projections are the column blocks of the d->d query/key/value maps.
template <typename T>
class MultiHeadSelfAttention {
 public:
  struct Cache {
    Tensor<T> input, q, k, v, concat;
    Tensor<T> weights;  // [n x heads x T x T]
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(const std::string& name, std::size_t dim, std::size_t heads);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);

  std::size_t heads() const { return heads_; }

  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;

 private:
  std::size_t heads_ = 1;
};

template <typename T>
class ConformerBlock {
 public:
  struct Cache {
    typename FeedForward<T>::Cache ffn1, ffn2;
    typename ConvModule<T>::Cache conv;
    ops::LayerNormCache<T> attn_ln;
    typename MultiHeadSelfAttention<T>::Cache attn;
    ops::DropoutMask<T> attn_drop;
  };

  ConformerBlock() = default;
  ConformerBlock(const std::string& name, const ConformerConfig& config);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache);
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  /// Zeroes the last linear map of every branch, making the block the
  /// identity function.
  void zero_output_layers();

  FeedForward<T> ffn1;
  ConvModule<T> conv;
  LayerNorm<T> attn_norm;
  MultiHeadSelfAttention<T> attention;
  FeedForward<T> ffn2;

 private:
  Tensor<T> attention_branch(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) const;
  Tensor<T> attention_branch_backward(const Tensor<T>& gy, const Cache& cache);

  ConformerConfig config_;
};

template <typename T>
class ConformerStack {
 public:
  struct Cache {
    std::vector<typename ConformerBlock<T>::Cache> blocks;
  };

  ConformerStack() = default;
  ConformerStack(const std::string& name, const ConformerConfig& config);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache);
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  std::vector<ConformerBlock<T>> blocks;
};

}  // namespace bilcnet
