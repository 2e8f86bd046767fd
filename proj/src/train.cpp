// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "bilcnet/error.hpp"

namespace bilcnet {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 2) fail(ErrorCode::InvalidConfig, "batch_size must be >= 2");
  if (max_epochs == 0) fail(ErrorCode::InvalidConfig, "max_epochs must be >= 1");
  if (early_stop_patience == 0) fail(ErrorCode::InvalidConfig, "early_stop_patience must be >= 1");
  if (!(lr > 0)) fail(ErrorCode::InvalidConfig, "lr must be positive");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) fail(ErrorCode::InvalidConfig, "betas must be in (0,1)");
  if (!(eps > 0)) fail(ErrorCode::InvalidConfig, "eps must be positive");
  if (weight_decay < 0) fail(ErrorCode::InvalidConfig, "weight_decay must be >= 0");
  if (grad_clip < 0) fail(ErrorCode::InvalidConfig, "grad_clip must be >= 0");
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"early_stop_patience", c.early_stop_patience},
              {"lr", c.lr},
              {"betas", {c.beta1, c.beta2}},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"seed", c.seed},
              {"lr_schedule", c.lr_schedule == LrSchedule::Cosine ? "cosine" : "none"}};
}

TrainConfig train_config_from_json(const json& j) {
  static const char* const kKeys[] = {"batch_size", "max_epochs", "early_stop_patience", "lr", "betas",
                                      "eps", "weight_decay", "grad_clip", "seed", "lr_schedule"};
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "train config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(std::begin(kKeys), std::end(kKeys), it.key()) == std::end(kKeys)) {
      fail(ErrorCode::InvalidConfig, "unknown key train." + it.key());
    }
  }
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.lr = j.value("lr", c.lr);
    if (j.contains("betas")) {
      const auto b = j.at("betas").get<std::vector<double>>();
      if (b.size() != 2) fail(ErrorCode::InvalidConfig, "betas needs two values");
      c.beta1 = b[0];
      c.beta2 = b[1];
    }
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    const std::string schedule = j.value("lr_schedule", std::string("none"));
    if (schedule == "cosine") {
      c.lr_schedule = LrSchedule::Cosine;
    } else if (schedule != "none") {
      fail(ErrorCode::InvalidConfig, "lr_schedule must be none or cosine");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- loss ----------------------------------------------------------------------

template <typename T>
double cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad) {
  if (logits.rank() != 2) fail(ErrorCode::ShapeMismatch, "cross_entropy expects [n x classes]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) fail(ErrorCode::LengthMismatch, "labels and logits disagree on n");
  if (grad) *grad = Tensor<T>(logits.shape());
  double total = 0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
    const T* row = logits.data() + i * k;
    double mx = row[0];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0;
    for (std::size_t c = 0; c < k; ++c) {
      p[c] = std::exp(static_cast<double>(row[c]) - mx);
      sum += p[c];
    }
    total += std::log(sum) + mx - static_cast<double>(row[y]);
    if (grad) {
      T* g = grad->data() + i * k;
      for (std::size_t c = 0; c < k; ++c) {
        g[c] = static_cast<T>((p[c] / sum - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return total / static_cast<double>(n);
}

template double cross_entropy<float>(const Tensor<float>&, std::span<const int>, Tensor<float>*);
template double cross_entropy<double>(const Tensor<double>&, std::span<const int>, Tensor<double>*);

// ---- optimizer -------------------------------------------------------------------

OptimizerState make_optimizer_state(const ParamList<float>& params) {
  OptimizerState s;
  for (auto* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

void adamw_step(const ParamList<float>& params, OptimizerState& state, const TrainConfig& c, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match the parameter list");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<float>& p = *params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape()) {
      fail(ErrorCode::ShapeMismatch, "shape mismatch for " + p.name);
    }
    const double decay = p.decay ? lr * c.weight_decay : 0.0;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = g[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      w[k] = static_cast<float>(w[k] - update - decay * w[k]);
    }
  }
}

double clip_grad_norm(const ParamList<float>& params, double max_norm) {
  double sq = 0;
  for (auto* p : params) {
    for (float g : p->grad.vec()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto* p : params) {
      for (float& g : p->grad.vec()) g *= scale;
    }
  }
  return norm;
}

// ---- history ---------------------------------------------------------------------

std::string history_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_acc"] = r.train_acc;
  j["val_loss"] = r.val_loss;
  j["val_acc"] = r.val_acc;
  return j.dump();
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) out += history_line(r) + "\n";
  return out;
}

// ---- loop -------------------------------------------------------------------------

void gather_batch(const DataView& view, std::span<const std::size_t> order, Tensor<float>& x,
                  std::vector<int>& labels) {
  const Dataset& d = *view.data;
  const std::size_t row = static_cast<std::size_t>(d.steps) * d.width;
  x = Tensor<float>({order.size(), d.steps, d.width});
  labels.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Sample& s = d.samples[view.indices[order[i]]];
    std::copy(s.features.begin(), s.features.end(), x.data() + i * row);
    labels[i] = s.label;
  }
}

namespace {

int argmax_row(const Tensor<float>& logits, std::size_t i) {
  const std::size_t k = logits.dim(1);
  const float* row = logits.data() + i * k;
  return static_cast<int>(std::max_element(row, row + k) - row);
}

// Batch boundaries over n samples; a trailing single sample joins the
// previous batch so batch statistics stay defined.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

struct Snapshot {
  std::vector<Tensor<float>> params;
  std::vector<Tensor<float>> buffers;

  static Snapshot take(BiLCNet<float>& net) {
    Snapshot s;
    for (auto* p : net.parameters()) s.params.push_back(p->value);
    for (auto* b : net.buffers()) s.buffers.push_back(b->value);
    return s;
  }
  void restore(BiLCNet<float>& net) const {
    auto params_list = net.parameters();
    auto buffer_list = net.buffers();
    for (std::size_t i = 0; i < params_list.size(); ++i) params_list[i]->value = params[i];
    for (std::size_t i = 0; i < buffer_list.size(); ++i) buffer_list[i]->value = buffers[i];
  }
};

}  // namespace

EvalResult evaluate(BiLCNet<float>& net, const DataView& view, std::size_t batch_size) {
  EvalResult r;
  if (view.size() == 0) return r;
  std::vector<std::size_t> order(view.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Tensor<float> x;
  std::vector<int> labels;
  double loss_sum = 0;
  std::size_t correct = 0;
  for (auto [b, e] : batch_ranges(order.size(), batch_size)) {
    gather_batch(view, std::span<const std::size_t>(order).subspan(b, e - b), x, labels);
    const Tensor<float> logits = net.infer(x);
    loss_sum += cross_entropy<float>(logits, labels, nullptr) * static_cast<double>(e - b);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int pred = argmax_row(logits, i);
      correct += pred == labels[i];
      r.labels.push_back(labels[i]);
      r.predictions.push_back(pred);
    }
  }
  r.loss = loss_sum / static_cast<double>(view.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(view.size());
  return r;
}

FitResult fit(BiLCNet<float>& net, const DataView& train, const DataView& val, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  if (train.size() < 2) fail(ErrorCode::EmptySplit, "training split needs at least 2 samples");
  if (val.size() == 0) fail(ErrorCode::EmptySplit, "validation split is empty");

  Rng rng(config.seed);
  const auto params = net.parameters();
  OptimizerState state = make_optimizer_state(params);
  FitResult result;
  Snapshot best = Snapshot::take(net);
  bool have_best = false;
  std::size_t stale = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ranges_per_epoch = batch_ranges(order.size(), config.batch_size).size();
  const double total_steps = static_cast<double>(ranges_per_epoch * config.max_epochs);

  Tensor<float> x;
  std::vector<int> labels;
  typename BiLCNet<float>::Cache cache;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (auto [b, e] : batch_ranges(order.size(), config.batch_size)) {
      gather_batch(train, std::span<const std::size_t>(order).subspan(b, e - b), x, labels);
      net.zero_grad();
      const Tensor<float> logits = net.forward(x, Mode::Train, rng, &cache);
      Tensor<float> glogits;
      loss_sum += cross_entropy<float>(logits, labels, &glogits) * static_cast<double>(e - b);
      for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_row(logits, i) == labels[i];
      net.backward(glogits, cache);
      result.train_samples_backpropagated += e - b;
      clip_grad_norm(params, config.grad_clip);
      double lr = config.lr;
      if (config.lr_schedule == LrSchedule::Cosine) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(state.t) / total_steps));
      }
      adamw_step(params, state, config, lr);
    }

    const EvalResult v = evaluate(net, val);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.val_loss = v.loss;
    rec.val_acc = v.accuracy;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!have_best || rec.val_acc > result.best_val_acc) {
      have_best = true;
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      best = Snapshot::take(net);
      stale = 0;
    } else if (++stale >= config.early_stop_patience) {
      break;
    }
  }
  best.restore(net);
  return result;
}

}  // namespace bilcnet
