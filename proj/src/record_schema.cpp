// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/record_schema.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "bilcnet/error.hpp"

namespace bilcnet {

using nlohmann::json;

std::string_view to_string(ChannelKind c) {
  switch (c) {
    case ChannelKind::PDCCH: return "PDCCH";
    case ChannelKind::PDSCH: return "PDSCH";
    case ChannelKind::PBCH: return "PBCH";
    case ChannelKind::PUCCH: return "PUCCH";
    case ChannelKind::PUSCH: return "PUSCH";
    case ChannelKind::PRACH: return "PRACH";
  }
  return "?";
}

std::string_view to_string(Direction d) { return d == Direction::UL ? "UL" : "DL"; }

std::string_view to_string(TrafficLabel l) {
  switch (l) {
    case TrafficLabel::Call: return "call";
    case TrafficLabel::Meeting: return "meeting";
    case TrafficLabel::Upload: return "upload";
    case TrafficLabel::Download: return "download";
  }
  return "?";
}

std::optional<ChannelKind> channel_from_string(std::string_view s) {
  for (auto c : {ChannelKind::PDCCH, ChannelKind::PDSCH, ChannelKind::PBCH, ChannelKind::PUCCH,
                 ChannelKind::PUSCH, ChannelKind::PRACH}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<TrafficLabel> label_from_string(std::string_view s) {
  for (auto l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

Direction direction_of(ChannelKind c) {
  switch (c) {
    case ChannelKind::PUCCH:
    case ChannelKind::PUSCH:
    case ChannelKind::PRACH: return Direction::UL;
    default: return Direction::DL;
  }
}

bool is_pipeline_channel(ChannelKind c) {
  return c != ChannelKind::PBCH && c != ChannelKind::PRACH;
}

GainLevel::GainLevel(int gain_db) : db_(gain_db) {
  if (!valid(gain_db)) fail(ErrorCode::RangeViolation, "gain_db " + std::to_string(gain_db) + " not in {64,66,...,84}");
}

GainLevel GainLevel::from_index(std::size_t index) {
  if (index >= kCount) fail(ErrorCode::RangeViolation, "gain index " + std::to_string(index));
  return GainLevel(kMinDb + kStepDb * static_cast<int>(index));
}

std::array<GainLevel, GainLevel::kCount> GainLevel::all() {
  return {GainLevel(64), GainLevel(66), GainLevel(68), GainLevel(70), GainLevel(72), GainLevel(74),
          GainLevel(76), GainLevel(78), GainLevel(80), GainLevel(82), GainLevel(84)};
}

bool GainLevel::valid(int gain_db) {
  return gain_db >= kMinDb && gain_db <= kMaxDb && (gain_db - kMinDb) % kStepDb == 0;
}

namespace {

[[noreturn]] void range(const std::string& what) { fail(ErrorCode::RangeViolation, what); }

std::uint64_t read_uint(const json& v, const char* key, std::uint64_t max) {
  if (!v.is_number_integer()) fail(ErrorCode::MalformedLine, std::string(key) + " must be an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > max) range(std::string(key) + "=" + std::to_string(u) + " out of range");
    return u;
  }
  const auto s = v.get<std::int64_t>();
  if (s < 0) range(std::string(key) + "=" + std::to_string(s) + " is negative");
  if (static_cast<std::uint64_t>(s) > max) range(std::string(key) + "=" + std::to_string(s) + " out of range");
  return static_cast<std::uint64_t>(s);
}

template <typename U>
std::optional<U> opt_uint(const json& obj, const char* key, std::uint64_t max) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return static_cast<U>(read_uint(*it, key, max));
}

std::optional<double> opt_real(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) fail(ErrorCode::MalformedLine, std::string(key) + " must be a number");
  return it->get<double>();
}

std::optional<bool> opt_bool(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_boolean()) fail(ErrorCode::MalformedLine, std::string(key) + " must be a boolean");
  return it->get<bool>();
}

const std::string& required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) fail(ErrorCode::MalformedLine, std::string("missing string field ") + key);
  return it->get_ref<const std::string&>();
}

const json& required(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::MalformedLine, std::string("missing field ") + key);
  return *it;
}

json parse_object(std::string_view line) {
  json obj = json::parse(line.begin(), line.end(), nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) fail(ErrorCode::MalformedLine, "not a JSON object");
  return obj;
}

void append_real(std::string& out, double v) {
  char buf[64];
  if (v == 0.0) v = 0.0;  // "-0" would parse back as integer 0
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

template <typename U>
void append_uint(std::string& out, const char* key, const std::optional<U>& v) {
  if (!v) return;
  out += ",\"";
  out += key;
  out += "\":";
  out += std::to_string(static_cast<std::uint64_t>(*v));
}

void append_opt_real(std::string& out, const char* key, const std::optional<double>& v) {
  if (!v) return;
  out += ",\"";
  out += key;
  out += "\":";
  append_real(out, *v);
}

bool is_shared(ChannelKind c) { return c == ChannelKind::PDSCH || c == ChannelKind::PUSCH; }

}  // namespace

void validate_record(const PhysicalChannelRecord& r) {
  if (r.subframe > 9) range("subframe=" + std::to_string(r.subframe) + " outside [0,9]");
  if (r.slot > 1) range("slot=" + std::to_string(r.slot) + " outside [0,1]");
  if (r.dir != direction_of(r.chan)) {
    range(std::string(to_string(r.chan)) + " cannot be " + std::string(to_string(r.dir)));
  }
  if (r.mcs && *r.mcs > 28) range("mcs outside [0,28]");
  if (r.harq_id && *r.harq_id > 15) range("harq_id outside [0,15]");
  if (r.symb_start && *r.symb_start > 13) range("symb_start outside [0,13]");
  if (r.symb_len && (*r.symb_len < 1 || *r.symb_len > 14)) range("symb_len outside [1,14]");
  if (r.pucch_format && *r.pucch_format > 4) range("pucch_format outside [0,4]");
  if (r.mod_order) {
    const auto m = *r.mod_order;
    if (m != 2 && m != 4 && m != 6 && m != 8) range("mod_order not in {2,4,6,8}");
  }
  if (r.aggregation_level) {
    const auto a = *r.aggregation_level;
    if (a != 1 && a != 2 && a != 4 && a != 8 && a != 16) range("aggregation_level not in {1,2,4,8,16}");
  }
  const bool shared = is_shared(r.chan);
  if (!shared && (r.mcs || r.mod_order || r.harq_id || r.crc_ok || r.tb_len)) {
    range(std::string(to_string(r.chan)) + " cannot carry shared-channel fields");
  }
  if (r.chan != ChannelKind::PDCCH && (r.cce_index || r.aggregation_level)) {
    range("cce_index/aggregation_level only apply to PDCCH");
  }
  if (r.chan != ChannelKind::PUCCH && r.pucch_format) range("pucch_format only applies to PUCCH");
}

PhysicalChannelRecord parse_record(std::string_view line) {
  const json obj = parse_object(line);
  if (required_string(obj, "type") != "rec") fail(ErrorCode::MalformedLine, "type is not \"rec\"");
  PhysicalChannelRecord r;
  r.frame = read_uint(required(obj, "frame"), "frame", std::numeric_limits<std::uint64_t>::max());
  r.subframe = static_cast<std::uint8_t>(read_uint(required(obj, "subframe"), "subframe", 255));
  r.slot = static_cast<std::uint8_t>(read_uint(required(obj, "slot"), "slot", 255));
  const auto& chan = required_string(obj, "chan");
  const auto kind = channel_from_string(chan);
  if (!kind) fail(ErrorCode::UnknownChannel, "channel \"" + chan + "\"");
  r.chan = *kind;
  const auto& dir = required_string(obj, "dir");
  if (dir == "UL") {
    r.dir = Direction::UL;
  } else if (dir == "DL") {
    r.dir = Direction::DL;
  } else {
    range("dir \"" + dir + "\"");
  }
  r.mcs = opt_uint<std::uint8_t>(obj, "mcs", 255);
  r.mod_order = opt_uint<std::uint8_t>(obj, "mod_order", 255);
  r.harq_id = opt_uint<std::uint8_t>(obj, "harq_id", 255);
  r.crc_ok = opt_bool(obj, "crc_ok");
  r.tb_len = opt_uint<std::uint32_t>(obj, "tb_len", std::numeric_limits<std::uint32_t>::max());
  r.prb = opt_uint<std::uint32_t>(obj, "prb", std::numeric_limits<std::uint32_t>::max());
  r.symb_start = opt_uint<std::uint8_t>(obj, "symb_start", 255);
  r.symb_len = opt_uint<std::uint8_t>(obj, "symb_len", 255);
  r.snr = opt_real(obj, "snr");
  r.epre = opt_real(obj, "epre");
  r.cce_index = opt_uint<std::uint32_t>(obj, "cce_index", std::numeric_limits<std::uint32_t>::max());
  r.aggregation_level = opt_uint<std::uint8_t>(obj, "aggregation_level", 255);
  r.pucch_format = opt_uint<std::uint8_t>(obj, "pucch_format", 255);
  validate_record(r);
  return r;
}

std::string serialize_record(const PhysicalChannelRecord& r) {
  std::string out;
  out.reserve(200);
  out += "{\"type\":\"rec\",\"frame\":";
  out += std::to_string(r.frame);
  out += ",\"subframe\":";
  out += std::to_string(r.subframe);
  out += ",\"slot\":";
  out += std::to_string(r.slot);
  out += ",\"chan\":\"";
  out += to_string(r.chan);
  out += "\",\"dir\":\"";
  out += to_string(r.dir);
  out += "\"";
  append_uint(out, "mcs", r.mcs);
  append_uint(out, "mod_order", r.mod_order);
  append_uint(out, "harq_id", r.harq_id);
  if (r.crc_ok) out += *r.crc_ok ? ",\"crc_ok\":true" : ",\"crc_ok\":false";
  append_uint(out, "tb_len", r.tb_len);
  append_uint(out, "prb", r.prb);
  append_uint(out, "symb_start", r.symb_start);
  append_uint(out, "symb_len", r.symb_len);
  append_opt_real(out, "snr", r.snr);
  append_opt_real(out, "epre", r.epre);
  append_uint(out, "cce_index", r.cce_index);
  append_uint(out, "aggregation_level", r.aggregation_level);
  append_uint(out, "pucch_format", r.pucch_format);
  out += "}";
  return out;
}

SessionHeader parse_session_header(std::string_view line) {
  const json obj = parse_object(line);
  if (required_string(obj, "type") != "session") fail(ErrorCode::MissingHeader, "first line is not a session header");
  SessionHeader h;
  const auto& label = required_string(obj, "label");
  const auto l = label_from_string(label);
  if (!l) range("unknown label \"" + label + "\"");
  h.label = *l;
  const auto& g = required(obj, "gain_db");
  if (!g.is_number_integer()) fail(ErrorCode::MalformedLine, "gain_db must be an integer");
  h.gain = GainLevel(g.get<int>());
  h.seed = read_uint(required(obj, "seed"), "seed", std::numeric_limits<std::uint64_t>::max());
  h.schema_version = static_cast<int>(read_uint(required(obj, "schema_version"), "schema_version", 1u << 30));
  if (h.schema_version != kSchemaVersion) {
    fail(ErrorCode::VersionMismatch, "schema_version " + std::to_string(h.schema_version));
  }
  return h;
}

std::string serialize_session_header(const SessionHeader& h) {
  std::string out = "{\"type\":\"session\",\"label\":\"";
  out += to_string(h.label);
  out += "\",\"gain_db\":";
  out += std::to_string(h.gain.db());
  out += ",\"seed\":";
  out += std::to_string(h.seed);
  out += ",\"schema_version\":";
  out += std::to_string(h.schema_version);
  out += "}";
  return out;
}

Session parse_session(std::string_view content, const std::string& origin) {
  Session s;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      if (!have_header) {
        s.header = parse_session_header(line);
        have_header = true;
        continue;
      }
      auto rec = parse_record(line);
      if (is_pipeline_channel(rec.chan)) {
        s.records.push_back(std::move(rec));
      } else {
        ++s.dropped_count;
      }
    } catch (const Error& e) {
      throw Error(e.code(), origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) fail(ErrorCode::MissingHeader, origin + ": no session header");
  return s;
}

Session read_session(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_session(buf.str(), path);
}

}  // namespace bilcnet
