// SPDX-License-Identifier: Apache-2.0
//
// Cross-entropy loss, AdamW and the epoch loop with early stopping on
// validation accuracy.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bilcnet/model.hpp"
#include "bilcnet/preprocess.hpp"

namespace bilcnet {

enum class LrSchedule { None, Cosine };

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 25;
  std::size_t early_stop_patience = 5;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 1;
  LrSchedule lr_schedule = LrSchedule::None;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep defaults; unknown keys throw InvalidConfig.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Mean negative log-likelihood of `labels` under softmax(logits). When
/// `grad` is given it receives (softmax - onehot) / n. Throws LabelOutOfRange.
template <typename T>
double cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad);

struct OptimizerState {
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
  std::uint64_t t = 0;
};

OptimizerState make_optimizer_state(const ParamList<float>& params);

/// One decoupled-decay Adam update of every parameter from its grad.
/// Parameters with decay == false (biases, norms) are not decayed.
void adamw_step(const ParamList<float>& params, OptimizerState& state, const TrainConfig& config, double lr);

/// Scales every grad so the global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(const ParamList<float>& params, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
};

std::string history_line(const EpochRecord& r);
std::string history_jsonl(const std::vector<EpochRecord>& history);

/// A subset of a dataset; samples are gathered by index.
struct DataView {
  const Dataset* data = nullptr;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

/// Copies samples [begin, end) of `order` into x[n x T x D] and labels.
void gather_batch(const DataView& view, std::span<const std::size_t> order, Tensor<float>& x,
                  std::vector<int>& labels);

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> labels;
  std::vector<int> predictions;
};

/// Eval-mode pass over a view in batches.
EvalResult evaluate(BiLCNet<float>& net, const DataView& view, std::size_t batch_size = 256);

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0;
  // Samples that contributed to a gradient, by split.
  std::size_t train_samples_backpropagated = 0;
  std::size_t val_samples_backpropagated = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `net` in place and leaves it holding the best-validation-accuracy
/// parameters and buffers. Throws EmptySplit.
FitResult fit(BiLCNet<float>& net, const DataView& train, const DataView& val, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

}  // namespace bilcnet
