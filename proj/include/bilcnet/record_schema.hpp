// SPDX-License-Identifier: Apache-2.0
//
// Per-subframe physical-channel records and the newline-delimited JSON
// session format they are stored in.
//
// Session file layout:
//   line 1   {"type":"session","label":"call","gain_db":64,"seed":7,"schema_version":1}
//   line 2+  {"type":"rec","frame":..,"subframe":..,"slot":..,"chan":..,"dir":..,<optional>}
//
// Optional record keys are written in the fixed order
//   mcs, mod_order, harq_id, crc_ok, tb_len, prb, symb_start, symb_len, snr,
//   epre, cce_index, aggregation_level, pucch_format
// and omitted when absent.

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bilcnet {

enum class ChannelKind : std::uint8_t { PDCCH, PDSCH, PBCH, PUCCH, PUSCH, PRACH };
enum class Direction : std::uint8_t { UL, DL };
enum class TrafficLabel : std::uint8_t { Call = 0, Meeting = 1, Upload = 2, Download = 3 };

inline constexpr std::array<TrafficLabel, 4> kAllLabels = {
    TrafficLabel::Call, TrafficLabel::Meeting, TrafficLabel::Upload, TrafficLabel::Download};

std::string_view to_string(ChannelKind c);
std::string_view to_string(Direction d);
/// Lower-case wire name ("call", "meeting", ...).
std::string_view to_string(TrafficLabel l);

std::optional<ChannelKind> channel_from_string(std::string_view s);
std::optional<TrafficLabel> label_from_string(std::string_view s);

/// Direction a channel is transmitted in (UL for PUCCH/PUSCH/PRACH).
Direction direction_of(ChannelKind c);

/// Channels the feature pipeline consumes; PBCH and PRACH are dropped.
bool is_pipeline_channel(ChannelKind c);

/// Transmission gain setting, 64..84 dB in 2 dB steps.
class GainLevel {
 public:
  static constexpr int kMinDb = 64;
  static constexpr int kMaxDb = 84;
  static constexpr int kStepDb = 2;
  static constexpr std::size_t kCount = 11;

  /// Throws RangeViolation for values off the grid.
  explicit GainLevel(int gain_db);
  static GainLevel from_index(std::size_t index);
  static std::array<GainLevel, kCount> all();
  static bool valid(int gain_db);

  int db() const noexcept { return db_; }
  std::size_t index() const noexcept { return static_cast<std::size_t>((db_ - kMinDb) / kStepDb); }

  friend auto operator<=>(const GainLevel&, const GainLevel&) = default;

 private:
  int db_;
};

struct PhysicalChannelRecord {
  std::uint64_t frame = 0;
  std::uint8_t subframe = 0;
  std::uint8_t slot = 0;
  ChannelKind chan = ChannelKind::PDCCH;
  Direction dir = Direction::DL;
  std::optional<std::uint8_t> mcs;
  std::optional<std::uint8_t> mod_order;
  std::optional<std::uint8_t> harq_id;
  std::optional<bool> crc_ok;
  std::optional<std::uint32_t> tb_len;
  std::optional<std::uint32_t> prb;
  std::optional<std::uint8_t> symb_start;
  std::optional<std::uint8_t> symb_len;
  std::optional<double> snr;
  std::optional<double> epre;
  std::optional<std::uint32_t> cce_index;
  std::optional<std::uint8_t> aggregation_level;
  std::optional<std::uint8_t> pucch_format;

  friend bool operator==(const PhysicalChannelRecord&, const PhysicalChannelRecord&) = default;
  /// Total order over all fields (absent sorts before present).
  friend std::partial_ordering operator<=>(const PhysicalChannelRecord&,
                                           const PhysicalChannelRecord&) = default;
};

inline constexpr int kSchemaVersion = 1;

struct SessionHeader {
  TrafficLabel label = TrafficLabel::Call;
  GainLevel gain{GainLevel::kMinDb};
  std::uint64_t seed = 0;
  int schema_version = kSchemaVersion;

  friend bool operator==(const SessionHeader&, const SessionHeader&) = default;
};

/// Throws MalformedLine, RangeViolation or UnknownChannel. Unknown keys are
/// ignored.
PhysicalChannelRecord parse_record(std::string_view line);

/// Checks every field invariant; throws RangeViolation.
void validate_record(const PhysicalChannelRecord& rec);

/// Canonical single-line form (no trailing newline).
std::string serialize_record(const PhysicalChannelRecord& rec);

SessionHeader parse_session_header(std::string_view line);
std::string serialize_session_header(const SessionHeader& header);

struct Session {
  SessionHeader header;
  std::vector<PhysicalChannelRecord> records;  // file order, pipeline channels only
  std::size_t dropped_count = 0;               // PBCH/PRACH records skipped
};

/// Reads a session file. Throws MissingHeader, IoFailure, or any parse
/// error re-raised with "path:line:" context.
Session read_session(const std::string& path);

/// Same as read_session over in-memory content; `origin` names it in errors.
Session parse_session(std::string_view content, const std::string& origin);

}  // namespace bilcnet
