// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bilcnet/error.hpp"

namespace bilcnet {

using nlohmann::json;

Splits temporal_split(const Dataset& data, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) fail(ErrorCode::InvalidConfig, "train_frac must be in (0,1)");
  std::map<std::uint32_t, std::vector<std::size_t>> sessions;
  for (std::size_t i = 0; i < data.samples.size(); ++i) sessions[data.samples[i].session].push_back(i);
  if (sessions.empty()) fail(ErrorCode::EmptySplit, "dataset has no samples");

  Splits s;
  for (auto& [session, idx] : sessions) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return data.samples[a].frame < data.samples[b].frame; });
    const double n = static_cast<double>(idx.size());
    // The epsilon keeps products like 0.8 * 10 from flooring to 7.
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(0.5 * (1.0 - train_frac) * n + 1e-9));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= idx.size()) {
      fail(ErrorCode::SessionTooShort, "session " + std::to_string(session) + " has " +
                                           std::to_string(idx.size()) + " frames, too few to split");
    }
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  return s;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(const Dataset& data,
                                                                               std::span<const std::size_t> indices,
                                                                               double val_frac) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) fail(ErrorCode::InvalidConfig, "val_frac must be in (0,1)");
  std::map<std::uint32_t, std::vector<std::size_t>> sessions;
  for (std::size_t i : indices) sessions[data.samples.at(i).session].push_back(i);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (auto& [session, idx] : sessions) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return data.samples[a].frame < data.samples[b].frame; });
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(idx.size()) + 1e-9)));
    if (n_val >= idx.size()) {
      fail(ErrorCode::SessionTooShort, "session " + std::to_string(session) + " too short to carve validation");
    }
    const auto cut = idx.begin() + static_cast<std::ptrdiff_t>(idx.size() - n_val);
    out.first.insert(out.first.end(), idx.begin(), cut);
    out.second.insert(out.second.end(), cut, idx.end());
  }
  return out;
}

std::vector<ZeroShotFold> zero_shot_folds(const Dataset& data) {
  std::array<bool, GainLevel::kCount> seen{};
  for (const auto& s : data.samples) seen.at(s.gain_index) = true;
  for (std::size_t g = 0; g < GainLevel::kCount; ++g) {
    if (!seen[g]) {
      fail(ErrorCode::MissingGain, "dataset has no samples at " + std::to_string(GainLevel::from_index(g).db()) + " dB");
    }
  }
  std::vector<ZeroShotFold> folds;
  for (std::size_t g = 0; g < GainLevel::kCount; ++g) {
    ZeroShotFold f;
    f.held_out = GainLevel::from_index(g);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      (data.samples[i].gain_index == g ? f.test : f.train).push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) fail(ErrorCode::LengthMismatch, "labels and predictions differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || y > 3 || p < 0 || p > 3) fail(ErrorCode::LabelOutOfRange, "class index outside [0,4)");
    ++cm.counts[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
  }
  return cm;
}

ClassMetrics macro_average(std::span<const ClassMetrics> per_class) {
  ClassMetrics m;
  if (per_class.empty()) return m;
  for (const auto& c : per_class) {
    m.precision += c.precision;
    m.recall += c.recall;
    m.f1 += c.f1;
  }
  const double n = static_cast<double>(per_class.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) fail(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  MetricsReport r;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    std::uint64_t col = 0, row = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      col += cm.counts[i][c];
      row += cm.counts[c][i];
    }
    const double tp = static_cast<double>(cm.counts[c][c]);
    trace += cm.counts[c][c];
    ClassMetrics& m = r.per_class[c];
    m.precision = col ? tp / static_cast<double>(col) : 0.0;
    m.recall = row ? tp / static_cast<double>(row) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  r.macro = macro_average(r.per_class);
  return r;
}

json report_to_json(const ConfusionMatrix& cm, const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["confusion"] = cm.counts;
  j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < 4; ++c) {
    nlohmann::ordered_json e;
    e["label"] = std::string(to_string(kAllLabels[c]));
    e["precision"] = r.per_class[c].precision;
    e["recall"] = r.per_class[c].recall;
    e["f1"] = r.per_class[c].f1;
    j["per_class"].push_back(std::move(e));
  }
  j["overall"] = {{"accuracy", r.accuracy},
                  {"macro_precision", r.macro.precision},
                  {"macro_recall", r.macro.recall},
                  {"macro_f1", r.macro.f1}};
  return j;
}

ZeroShotReport zero_shot_report(std::span<const std::pair<GainLevel, double>> folds) {
  if (folds.size() != GainLevel::kCount) {
    fail(ErrorCode::WrongFoldCount, "expected 11 folds, got " + std::to_string(folds.size()));
  }
  ZeroShotReport r;
  double sum = 0;
  for (const auto& [gain, acc] : folds) {
    if (!r.per_gain.emplace(gain.db(), acc).second) {
      fail(ErrorCode::WrongFoldCount, "gain " + std::to_string(gain.db()) + " appears twice");
    }
    sum += acc;
  }
  r.mean = sum / static_cast<double>(folds.size());
  return r;
}

json to_json(const ZeroShotReport& r) {
  nlohmann::ordered_json per_gain;
  for (const auto& [gain, acc] : r.per_gain) per_gain[std::to_string(gain)] = acc;
  nlohmann::ordered_json j;
  j["per_gain"] = per_gain;
  j["mean"] = r.mean;
  return j;
}

}  // namespace bilcnet
