// SPDX-License-Identifier: Apache-2.0
//
// Synthetic physical-channel sessions conditioned on traffic label and
// transmission gain.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bilcnet/record_schema.hpp"

namespace bilcnet {

struct TrafficProfile {
  TrafficLabel label = TrafficLabel::Call;
  double ul_activity = 0.0;  // stationary probability a subframe carries UL data
  double dl_activity = 0.0;
  double tb_len_log_mean_ul = 0.0;
  double tb_len_log_mean_dl = 0.0;
  double tb_len_log_sd_ul = 0.0;
  double tb_len_log_sd_dl = 0.0;
  double prb_mean_ul = 0.0;
  double prb_mean_dl = 0.0;
  double burstiness = 0.0;  // 0 = memoryless, ->1 = long bursts
  std::optional<int> periodicity_ms;
  double dual_slot_prob = 0.0;  // chance an active subframe is scheduled in both slots

  /// Throws InvalidConfig.
  void validate() const;
};

TrafficProfile default_profile(TrafficLabel label);

struct ChannelQualityModel {
  GainLevel gain{GainLevel::kMinDb};
  double snr_mean = 0.0;
  double snr_sd = 0.0;
  double bler_base = 0.0;
  double epre_mean = 0.0;

  static ChannelQualityModel for_gain(GainLevel gain);
};

/// MCS index -> bits per symbol (0-9: 2, 10-16: 4, 17-27: 6, 28: 8).
std::uint8_t mod_order_for_mcs(std::uint8_t mcs);

/// Seed of the (label, gain) session under a dataset root seed.
std::uint64_t session_seed(std::uint64_t root, TrafficLabel label, GainLevel gain);

std::vector<PhysicalChannelRecord> generate_records(const TrafficProfile& profile,
                                                    const ChannelQualityModel& quality,
                                                    std::uint64_t frames, std::uint64_t seed);

/// Full session file content (header line + one line per record).
std::string generate_session(TrafficLabel label, GainLevel gain, std::uint64_t frames,
                             std::uint64_t seed);

struct ManifestEntry {
  std::string file;
  TrafficLabel label;
  int gain_db;
  std::size_t records;
};

struct Manifest {
  std::uint64_t root_seed = 0;
  std::vector<ManifestEntry> sessions;

  std::string to_json() const;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes the 44 `<label>_<gain>.jsonl` files and manifest.json. Throws IoFailure.
Manifest generate_dataset(const std::string& out_dir, std::uint64_t frames_per_session,
                          std::uint64_t seed);

}  // namespace bilcnet
