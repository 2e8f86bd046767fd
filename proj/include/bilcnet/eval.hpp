// SPDX-License-Identifier: Apache-2.0
//
// Temporal and leave-one-gain-out splits, confusion matrices and
// macro-averaged metrics.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bilcnet/preprocess.hpp"

namespace bilcnet {

struct Splits {
  std::vector<std::size_t> train, val, test;  // dataset indices, session then frame order
};

/// Per session: first floor(f N) frames train, next floor((1-f) N / 2) val,
/// the rest test. Throws SessionTooShort when any part would be empty.
Splits temporal_split(const Dataset& data, double train_frac);

struct ZeroShotFold {
  GainLevel held_out{GainLevel::kMinDb};
  std::vector<std::size_t> train;  // every sample with another gain
  std::vector<std::size_t> test;   // every sample with the held-out gain
};

/// Splits `indices` per session: the last floor(val_frac N) frames (at least
/// one) go to val, the rest to train. Throws SessionTooShort.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(const Dataset& data,
                                                                               std::span<const std::size_t> indices,
                                                                               double val_frac);

/// One fold per gain level, ordered 64..84 dB. Throws MissingGain.
std::vector<ZeroShotFold> zero_shot_folds(const Dataset& data);

struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 4>, 4> counts{};  // [true][predicted]

  std::uint64_t total() const;
};

/// Throws LengthMismatch, LabelOutOfRange.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricsReport {
  std::array<ClassMetrics, 4> per_class{};
  double accuracy = 0;
  ClassMetrics macro;
};

/// Unweighted mean of each field.
ClassMetrics macro_average(std::span<const ClassMetrics> per_class);

/// Throws EmptyMatrix.
MetricsReport metrics(const ConfusionMatrix& cm);

nlohmann::json report_to_json(const ConfusionMatrix& cm, const MetricsReport& report);

struct ZeroShotReport {
  std::map<int, double> per_gain;  // gain dB -> accuracy
  double mean = 0;
};

/// Throws WrongFoldCount unless there is one accuracy per gain level.
ZeroShotReport zero_shot_report(std::span<const std::pair<GainLevel, double>> fold_accuracies);

nlohmann::json to_json(const ZeroShotReport& report);

}  // namespace bilcnet
