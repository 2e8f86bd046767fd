// SPDX-License-Identifier: Apache-2.0
//
// BiLCNet: BiLSTM -> linear projection -> Conformer stack -> attention
// pooling -> fully connected classifier. Logits are raw (no softmax).

#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "bilcnet/bilstm.hpp"
#include "bilcnet/conformer.hpp"
#include "bilcnet/record_schema.hpp"

namespace bilcnet {

inline constexpr std::size_t kNumClasses = 4;

struct BiLCNetConfig {
  BiLstmConfig bilstm;
  ConformerConfig conformer;
  std::size_t classifier_hidden = 128;
  std::size_t num_classes = kNumClasses;
  double dropout = 0.1;

  /// Throws InvalidConfig when widths disagree or values are out of range.
  void validate() const;
  static BiLCNetConfig with_input_dim(std::size_t input_dim);
};

nlohmann::json to_json(const BiLCNetConfig& config);
BiLCNetConfig config_from_json(const nlohmann::json& j);

/// Softmax-weighted sum over time; scores come from a d->1 linear map.
template <typename T>
class AttentionPool {
 public:
  struct Cache {
    Tensor<T> input;
    Tensor<T> weights;  // [n x T]
  };

  AttentionPool() = default;
  AttentionPool(const std::string& name, std::size_t dim);

  void init(Rng& rng);
  /// h[n x T x d] -> [n x d]
  Tensor<T> forward(const Tensor<T>& h, Cache* cache) const;
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);

  Linear<T> score;  // weight [d x 1], bias [1]
};

/// Linear -> BatchNorm -> GELU -> dropout -> Linear
template <typename T>
class ClassifierHead {
 public:
  struct Cache {
    Tensor<T> input, hidden, bn_out, activated, dropped;
    ops::BatchNormCache<T> bn;
    ops::DropoutMask<T> drop;
  };

  ClassifierHead() = default;
  ClassifierHead(const std::string& name, std::size_t in, std::size_t hidden, std::size_t classes,
                 double dropout);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache);
  Tensor<T> backward(const Tensor<T>& gy, const Cache& cache);
  void collect(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  Linear<T> fc1;
  BatchNorm<T> bn;
  Linear<T> fc2;

 private:
  double dropout_ = 0.0;
};

template <typename T>
class BiLCNet {
 public:
  struct Cache {
    typename BiLstm<T>::Cache bilstm;
    Tensor<T> recurrent;  // BiLSTM output, input to the projection
    Tensor<T> projected;
    typename ConformerStack<T>::Cache conformer;
    typename AttentionPool<T>::Cache pool;
    typename ClassifierHead<T>::Cache head;
  };

  BiLCNet() = default;
  explicit BiLCNet(const BiLCNetConfig& config);

  void init(Rng& rng);
  /// x[n x T x D] normalized features -> logits [n x num_classes]
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache);
  /// Eval-mode forward; draws no randomness.
  Tensor<T> infer(const Tensor<T>& x);
  /// Returns dL/dx; accumulates every parameter gradient.
  Tensor<T> backward(const Tensor<T>& glogits, const Cache& cache);

  ParamList<T> parameters();
  BufferList<T> buffers();
  std::size_t parameter_count();
  void zero_grad();

  const BiLCNetConfig& config() const { return config_; }

  BiLstm<T> bilstm;
  Linear<T> projection;
  ConformerStack<T> conformer;
  AttentionPool<T> pool;
  ClassifierHead<T> head;

 private:
  BiLCNetConfig config_;
};

struct Prediction {
  TrafficLabel label;
  std::array<double, kNumClasses> probs;
};

/// softmax over the logits row; argmax with ties to the lowest index.
Prediction prediction_from_logits(std::span<const float> logits);

/// Eval-mode predictions for a batch x[n x T x D].
std::vector<Prediction> predict(BiLCNet<float>& net, const Tensor<float>& x);

// ---- model file ------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct LoadedModel {
  BiLCNet<float> net;
  std::vector<Buffer<float>> extras;
  nlohmann::json meta;
};

/// Writes parameters, buffers and `extras` (all keyed by name, sorted) plus
/// the config JSON. `meta` is stored alongside the model config.
void save_model(const std::string& path, BiLCNet<float>& net,
                const std::vector<Buffer<float>>& extras = {},
                const nlohmann::json& meta = nlohmann::json::object());

LoadedModel load_model(const std::string& path);

}  // namespace bilcnet
