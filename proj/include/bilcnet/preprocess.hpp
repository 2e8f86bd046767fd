// SPDX-License-Identifier: Apache-2.0
//
// Records -> per-frame 10 x D channel feature matrices, derived HARQ /
// efficiency / modulation descriptors, normalization and the BLCD dataset
// file.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bilcnet/record_schema.hpp"

namespace bilcnet {

inline constexpr std::size_t kSubframesPerFrame = 10;
inline constexpr std::size_t kDefaultWindow = 10;

enum class Reduction { First, Sum, Mean, Max, Count, PresentFlag };

/// Record field a slot reads. None counts records; Reserved is always 0.
enum class Field {
  None, Mcs, ModOrder, HarqId, CrcOk, TbLen, Prb, SymbStart, SymbLen,
  Snr, Epre, CceIndex, AggregationLevel, PucchFormat, Reserved
};

struct FeatureSlot {
  ChannelKind channel;
  Field field;
  Reduction reduction;
  std::string name;
};

struct FeatureSchema {
  int version = 1;
  std::vector<FeatureSlot> slots;
  std::vector<std::string> derived_slots;

  std::size_t width() const { return slots.size() + derived_slots.size(); }
  std::vector<std::string> feature_names() const;
  /// Throws SchemaMismatch when a slot names a field its channel never carries.
  void validate() const;

  /// Version 1 layout, D = 61.
  static const FeatureSchema& default_v1();
};

/// False for combinations like (PUCCH, tb_len) that no valid record carries.
bool field_applies(ChannelKind channel, Field field);

struct ChannelFeatureMatrix {
  std::vector<float> values;  // [10 x D] row-major
  std::size_t width = 0;
  TrafficLabel label = TrafficLabel::Call;
  GainLevel gain{GainLevel::kMinDb};
  std::uint64_t frame = 0;
  std::uint32_t session = 0;

  float at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

/// Records of one subframe -> vector of length D (derived slots left 0).
std::vector<double> build_subframe_vector(std::span<const PhysicalChannelRecord> records,
                                          const FeatureSchema& schema);

/// Records of one frame -> 10 x D matrix; order of `records` is irrelevant.
ChannelFeatureMatrix build_frame_matrix(std::span<const PhysicalChannelRecord> records,
                                        const FeatureSchema& schema, TrafficLabel label,
                                        GainLevel gain);

struct HarqWindowStats {
  std::uint64_t n_succ = 0;
  std::uint64_t n_total = 0;
  Direction direction = Direction::DL;
};

/// 1 - n_succ / n_total, 0 when there are no events. Throws InvariantViolation.
double compute_err(const HarqWindowStats& stats);
/// tb_sum / prb_sum, 0 when prb_sum is 0. Throws NegativeInput.
double compute_pdsch_eff(double tb_sum, double prb_sum);
/// Population coefficient of variation; 0 for empty input.
double compute_mvi(std::span<const int> mod_orders);

/// Per-frame totals feeding the derived block.
struct FrameAggregates {
  HarqWindowStats harq_ul{0, 0, Direction::UL};
  HarqWindowStats harq_dl{0, 0, Direction::DL};
  double pdsch_tb_sum = 0;
  double pdsch_prb_sum = 0;
  std::vector<int> mod_ul, mod_dl;
  // Indexed by Direction: tb_len sum, prb sum, snr mean, mcs mean.
  std::array<std::array<double, 4>, 2> rolling_inputs{};
};

FrameAggregates aggregate_frame(std::span<const PhysicalChannelRecord> records);

/// Fills the derived slots of every row. `window` holds the trailing frames
/// (oldest first, current frame last).
void augment_features(ChannelFeatureMatrix& matrix, const FeatureSchema& schema,
                      std::span<const FrameAggregates> window);

/// Every frame between the first and last record of the session, in order.
std::vector<ChannelFeatureMatrix> session_matrices(const Session& session, std::uint32_t ordinal,
                                                   const FeatureSchema& schema,
                                                   std::size_t window = kDefaultWindow);

// ---- dataset ---------------------------------------------------------------

struct Sample {
  std::uint8_t label = 0;
  std::uint8_t gain_index = 0;
  std::uint32_t session = 0;
  std::uint32_t frame = 0;  // position within its session; not stored on disk
  std::vector<float> features;  // [T x D]
};

struct Dataset {
  std::uint32_t steps = kSubframesPerFrame;
  std::uint32_t width = 0;
  std::vector<Sample> samples;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

Dataset to_dataset(const std::vector<ChannelFeatureMatrix>& matrices);
void write_dataset(const std::string& path, const Dataset& data);
/// Throws BadMagic, VersionMismatch, IoFailure, LabelOutOfRange.
Dataset read_dataset(const std::string& path);

/// Reads every session of a generated directory (manifest order when a
/// manifest is present, sorted file names otherwise).
Dataset preprocess_directory(const std::string& dir, const FeatureSchema& schema,
                             std::size_t window = kDefaultWindow);

// ---- normalization -----------------------------------------------------------

inline constexpr double kSigmaFloor = 1e-6;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> sigma;

  /// x -> (x - mean) / sigma over the last axis of a [.. x D] buffer.
  void apply(std::span<float> values) const;
  void apply(Dataset& data) const;
};

/// Per-feature mean / population sigma over every row of the indexed samples.
/// Throws EmptyInput.
NormStats normalize_dataset(const Dataset& data, std::span<const std::size_t> indices);

nlohmann::json stats_to_json(const NormStats& stats, const FeatureSchema& schema);
NormStats stats_from_json(const nlohmann::json& j);

}  // namespace bilcnet
