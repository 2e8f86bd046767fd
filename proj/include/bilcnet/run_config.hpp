// SPDX-License-Identifier: Apache-2.0
//
// Merged configuration for a CLI run: model, training, schema, split and paths.

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "bilcnet/model.hpp"
#include "bilcnet/train.hpp"

namespace bilcnet {

struct RunConfig {
  BiLCNetConfig model;
  TrainConfig train;
  std::uint32_t schema_version = 1;
  std::size_t window = 10;
  double train_frac = 0.8;
  // Fraction of each training session held back for validation in zero-shot folds.
  double zeroshot_val_frac = 0.1;
  struct {
    std::string data;
    std::string model;
    std::string report;
  } paths;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Keys: "model", "train", "schema" {version, window}, "split" {train_frac,
/// zeroshot_val_frac}, "paths" {data, model, report}. Missing keys keep
/// defaults; unknown keys throw InvalidConfig.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);

/// Parses a JSON file. Throws IoFailure or InvalidConfig.
RunConfig load_run_config(const std::string& path);

}  // namespace bilcnet
