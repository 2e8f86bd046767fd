// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "bilcnet/error.hpp"

namespace bilcnet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

// ---- schema -------------------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_shared(ChannelKind c) { return c == ChannelKind::PDSCH || c == ChannelKind::PUSCH; }

const std::array<const char*, 4> kRollingQuantities = {"tb_len", "prb", "snr", "mcs"};

FeatureSchema make_default_schema() {
  FeatureSchema s;
  s.version = 1;
  auto add = [&](ChannelKind c, Field f, Reduction r, const std::string& what) {
    s.slots.push_back({c, f, r, lower(to_string(c)) + "." + what});
  };
  const ChannelKind channels[] = {ChannelKind::PDCCH, ChannelKind::PDSCH, ChannelKind::PUCCH,
                                  ChannelKind::PUSCH};
  for (auto c : channels) {
    add(c, Field::None, Reduction::PresentFlag, "present");
    add(c, Field::None, Reduction::Count, "count");
    add(c, Field::Epre, Reduction::Mean, "epre_mean");
    add(c, Field::Snr, Reduction::Mean, "snr_mean");
  }
  for (auto c : {ChannelKind::PUSCH, ChannelKind::PDSCH}) {
    add(c, Field::Mcs, Reduction::Mean, "mcs_mean");
    add(c, Field::ModOrder, Reduction::Mean, "mod_order_mean");
    add(c, Field::TbLen, Reduction::Sum, "tb_len_sum");
    add(c, Field::Prb, Reduction::Sum, "prb_sum");
    add(c, Field::SymbStart, Reduction::First, "symb_start_first");
    add(c, Field::SymbLen, Reduction::Mean, "symb_len_mean");
    add(c, Field::CrcOk, Reduction::Mean, "crc_ok_mean");
    add(c, Field::HarqId, Reduction::Count, "harq_count");
  }
  add(ChannelKind::PDCCH, Field::CceIndex, Reduction::Mean, "cce_index_mean");
  add(ChannelKind::PDCCH, Field::AggregationLevel, Reduction::Mean, "aggregation_level_mean");
  add(ChannelKind::PDCCH, Field::None, Reduction::Count, "dci_count");
  add(ChannelKind::PDCCH, Field::Reserved, Reduction::Sum, "reserved0");
  add(ChannelKind::PUCCH, Field::PucchFormat, Reduction::First, "format_first");
  add(ChannelKind::PUCCH, Field::None, Reduction::Count, "feedback_count");
  add(ChannelKind::PUCCH, Field::Reserved, Reduction::Sum, "reserved0");
  add(ChannelKind::PUCCH, Field::Reserved, Reduction::Sum, "reserved1");

  s.derived_slots = {"err_ul", "err_dl", "eff_pdsch", "mvi_dl", "mvi_ul"};
  for (const char* dir : {"ul", "dl"}) {
    for (const char* q : kRollingQuantities) {
      s.derived_slots.push_back(std::string("roll_mean.") + q + "." + dir);
      s.derived_slots.push_back(std::string("roll_std.") + q + "." + dir);
    }
  }
  return s;
}

std::optional<double> field_value(const PhysicalChannelRecord& r, Field f) {
  auto opt = [](const auto& o) -> std::optional<double> {
    if (!o) return std::nullopt;
    return static_cast<double>(*o);
  };
  switch (f) {
    case Field::None: return 1.0;
    case Field::Reserved: return std::nullopt;
    case Field::Mcs: return opt(r.mcs);
    case Field::ModOrder: return opt(r.mod_order);
    case Field::HarqId: return opt(r.harq_id);
    case Field::CrcOk: return opt(r.crc_ok);
    case Field::TbLen: return opt(r.tb_len);
    case Field::Prb: return opt(r.prb);
    case Field::SymbStart: return opt(r.symb_start);
    case Field::SymbLen: return opt(r.symb_len);
    case Field::Snr: return r.snr;
    case Field::Epre: return r.epre;
    case Field::CceIndex: return opt(r.cce_index);
    case Field::AggregationLevel: return opt(r.aggregation_level);
    case Field::PucchFormat: return opt(r.pucch_format);
  }
  return std::nullopt;
}

}  // namespace

bool field_applies(ChannelKind channel, Field field) {
  switch (field) {
    case Field::Mcs:
    case Field::ModOrder:
    case Field::HarqId:
    case Field::CrcOk:
    case Field::TbLen: return is_shared(channel);
    case Field::CceIndex:
    case Field::AggregationLevel: return channel == ChannelKind::PDCCH;
    case Field::PucchFormat: return channel == ChannelKind::PUCCH;
    default: return true;
  }
}

std::vector<std::string> FeatureSchema::feature_names() const {
  std::vector<std::string> names;
  for (const auto& s : slots) names.push_back(s.name);
  names.insert(names.end(), derived_slots.begin(), derived_slots.end());
  return names;
}

void FeatureSchema::validate() const {
  for (const auto& s : slots) {
    if (!field_applies(s.channel, s.field)) {
      fail(ErrorCode::SchemaMismatch, "slot " + s.name + " reads a field " +
                                          std::string(to_string(s.channel)) + " never carries");
    }
  }
}

const FeatureSchema& FeatureSchema::default_v1() {
  static const FeatureSchema schema = make_default_schema();
  return schema;
}

// ---- matrices -----------------------------------------------------------------

std::vector<double> build_subframe_vector(std::span<const PhysicalChannelRecord> records,
                                          const FeatureSchema& schema) {
  std::vector<PhysicalChannelRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a < b; });

  std::vector<double> out(schema.width(), 0.0);
  for (std::size_t i = 0; i < schema.slots.size(); ++i) {
    const FeatureSlot& slot = schema.slots[i];
    if (!field_applies(slot.channel, slot.field)) {
      fail(ErrorCode::SchemaMismatch, "slot " + slot.name + " is structurally impossible");
    }
    if (slot.field == Field::Reserved) continue;
    double sum = 0, mx = 0;
    std::size_t n = 0;
    std::optional<double> first;
    for (const auto& r : sorted) {
      if (r.chan != slot.channel) continue;
      const auto v = field_value(r, slot.field);
      if (!v) continue;
      if (!first) first = *v;
      mx = n == 0 ? *v : std::max(mx, *v);
      sum += *v;
      ++n;
    }
    if (n == 0) continue;
    switch (slot.reduction) {
      case Reduction::First: out[i] = *first; break;
      case Reduction::Sum: out[i] = sum; break;
      case Reduction::Mean: out[i] = sum / static_cast<double>(n); break;
      case Reduction::Max: out[i] = mx; break;
      case Reduction::Count: out[i] = static_cast<double>(n); break;
      case Reduction::PresentFlag: out[i] = 1.0; break;
    }
  }
  return out;
}

ChannelFeatureMatrix build_frame_matrix(std::span<const PhysicalChannelRecord> records,
                                        const FeatureSchema& schema, TrafficLabel label, GainLevel gain) {
  const std::size_t d = schema.width();
  ChannelFeatureMatrix m;
  m.width = d;
  m.label = label;
  m.gain = gain;
  m.values.assign(kSubframesPerFrame * d, 0.0f);
  if (!records.empty()) m.frame = records.front().frame;

  std::array<std::vector<PhysicalChannelRecord>, kSubframesPerFrame> by_subframe;
  for (const auto& r : records) {
    if (r.subframe >= kSubframesPerFrame) fail(ErrorCode::RangeViolation, "subframe outside [0,9]");
    if (r.frame != m.frame) fail(ErrorCode::InvariantViolation, "records span several frames");
    by_subframe[r.subframe].push_back(r);
  }
  schema.validate();
  for (std::size_t t = 0; t < kSubframesPerFrame; ++t) {
    if (by_subframe[t].empty()) continue;
    const auto row = build_subframe_vector(by_subframe[t], schema);
    std::transform(row.begin(), row.end(), m.values.begin() + static_cast<std::ptrdiff_t>(t * d),
                   [](double v) { return static_cast<float>(v); });
  }
  return m;
}

double compute_err(const HarqWindowStats& s) {
  if (s.n_succ > s.n_total) fail(ErrorCode::InvariantViolation, "n_succ exceeds n_total");
  if (s.n_total == 0) return 0.0;
  return 1.0 - static_cast<double>(s.n_succ) / static_cast<double>(s.n_total);
}

double compute_pdsch_eff(double tb_sum, double prb_sum) {
  if (tb_sum < 0 || prb_sum < 0) fail(ErrorCode::NegativeInput, "efficiency inputs must be >= 0");
  if (prb_sum == 0) return 0.0;
  return tb_sum / prb_sum;
}

double compute_mvi(std::span<const int> mod_orders) {
  if (mod_orders.empty()) return 0.0;
  const double n = static_cast<double>(mod_orders.size());
  double mean = 0;
  for (int m : mod_orders) mean += m;
  mean /= n;
  if (mean == 0) return 0.0;
  double var = 0;
  for (int m : mod_orders) var += (m - mean) * (m - mean);
  return std::sqrt(var / n) / mean;
}

FrameAggregates aggregate_frame(std::span<const PhysicalChannelRecord> records) {
  FrameAggregates a;
  std::array<std::array<double, 2>, 2> snr_acc{}, mcs_acc{};  // [dir] -> {sum, count}
  for (const auto& r : records) {
    if (!is_shared(r.chan)) continue;
    const auto d = static_cast<std::size_t>(r.dir);
    const bool up = r.dir == Direction::UL;
    if (r.crc_ok) {
      auto& h = up ? a.harq_ul : a.harq_dl;
      ++h.n_total;
      if (*r.crc_ok) ++h.n_succ;
    }
    if (r.mod_order) (up ? a.mod_ul : a.mod_dl).push_back(*r.mod_order);
    if (r.tb_len) a.rolling_inputs[d][0] += *r.tb_len;
    if (r.prb) a.rolling_inputs[d][1] += *r.prb;
    if (r.snr) {
      snr_acc[d][0] += *r.snr;
      snr_acc[d][1] += 1;
    }
    if (r.mcs) {
      mcs_acc[d][0] += *r.mcs;
      mcs_acc[d][1] += 1;
    }
    if (!up) {
      if (r.tb_len) a.pdsch_tb_sum += *r.tb_len;
      if (r.prb) a.pdsch_prb_sum += *r.prb;
    }
  }
  for (std::size_t d = 0; d < 2; ++d) {
    a.rolling_inputs[d][2] = snr_acc[d][1] > 0 ? snr_acc[d][0] / snr_acc[d][1] : 0.0;
    a.rolling_inputs[d][3] = mcs_acc[d][1] > 0 ? mcs_acc[d][0] / mcs_acc[d][1] : 0.0;
  }
  // Sorting keeps MVI independent of record order in floating point.
  std::sort(a.mod_ul.begin(), a.mod_ul.end());
  std::sort(a.mod_dl.begin(), a.mod_dl.end());
  return a;
}

void augment_features(ChannelFeatureMatrix& m, const FeatureSchema& schema,
                      std::span<const FrameAggregates> window) {
  if (window.empty()) fail(ErrorCode::EmptyInput, "augment_features needs the current frame");
  const FrameAggregates& cur = window.back();
  std::map<std::string, double> derived;
  derived["err_ul"] = compute_err(cur.harq_ul);
  derived["err_dl"] = compute_err(cur.harq_dl);
  derived["eff_pdsch"] = compute_pdsch_eff(cur.pdsch_tb_sum, cur.pdsch_prb_sum);
  derived["mvi_dl"] = compute_mvi(cur.mod_dl);
  derived["mvi_ul"] = compute_mvi(cur.mod_ul);
  const double n = static_cast<double>(window.size());
  for (std::size_t d = 0; d < 2; ++d) {
    const std::string dir = d == static_cast<std::size_t>(Direction::UL) ? "ul" : "dl";
    for (std::size_t q = 0; q < kRollingQuantities.size(); ++q) {
      double mean = 0;
      for (const auto& f : window) mean += f.rolling_inputs[d][q];
      mean /= n;
      double var = 0;
      for (const auto& f : window) var += (f.rolling_inputs[d][q] - mean) * (f.rolling_inputs[d][q] - mean);
      const std::string name = std::string(kRollingQuantities[q]) + "." + dir;
      derived["roll_mean." + name] = mean;
      derived["roll_std." + name] = std::sqrt(var / n);
    }
  }
  const std::size_t base = schema.slots.size();
  for (std::size_t k = 0; k < schema.derived_slots.size(); ++k) {
    const auto it = derived.find(schema.derived_slots[k]);
    if (it == derived.end()) fail(ErrorCode::SchemaMismatch, "unknown derived slot " + schema.derived_slots[k]);
    const auto v = static_cast<float>(it->second);
    for (std::size_t t = 0; t < kSubframesPerFrame; ++t) m.values[t * m.width + base + k] = v;
  }
}

std::vector<ChannelFeatureMatrix> session_matrices(const Session& session, std::uint32_t ordinal,
                                                   const FeatureSchema& schema, std::size_t window) {
  if (window == 0) fail(ErrorCode::InvalidConfig, "window must be >= 1");
  std::vector<ChannelFeatureMatrix> out;
  if (session.records.empty()) return out;
  std::vector<PhysicalChannelRecord> records = session.records;
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a < b; });
  const std::uint64_t first = records.front().frame;
  const std::uint64_t last = records.back().frame;

  std::vector<FrameAggregates> history;
  auto it = records.begin();
  for (std::uint64_t frame = first; frame <= last; ++frame) {
    auto end = std::find_if(it, records.end(), [&](const auto& r) { return r.frame != frame; });
    const std::span<const PhysicalChannelRecord> frame_records(records.data() + (it - records.begin()),
                                                               static_cast<std::size_t>(end - it));
    ChannelFeatureMatrix m = build_frame_matrix(frame_records, schema, session.header.label, session.header.gain);
    m.frame = frame;
    m.session = ordinal;
    history.push_back(aggregate_frame(frame_records));
    const std::size_t from = history.size() > window ? history.size() - window : 0;
    augment_features(m, schema, std::span<const FrameAggregates>(history).subspan(from));
    out.push_back(std::move(m));
    it = end;
  }
  return out;
}

// ---- dataset ------------------------------------------------------------------

namespace {

constexpr char kDatasetMagic[4] = {'B', 'L', 'C', 'D'};

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) fail(ErrorCode::IoFailure, path + ": truncated dataset");
  return v;
}

}  // namespace

Dataset to_dataset(const std::vector<ChannelFeatureMatrix>& matrices) {
  Dataset d;
  if (!matrices.empty()) d.width = static_cast<std::uint32_t>(matrices.front().width);
  std::map<std::uint32_t, std::uint32_t> position;
  d.samples.reserve(matrices.size());
  for (const auto& m : matrices) {
    if (m.width != d.width) fail(ErrorCode::ShapeMismatch, "matrices disagree on D");
    Sample s;
    s.label = static_cast<std::uint8_t>(m.label);
    s.gain_index = static_cast<std::uint8_t>(m.gain.index());
    s.session = m.session;
    s.frame = position[m.session]++;
    s.features = m.values;
    d.samples.push_back(std::move(s));
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path);
  out.write(kDatasetMagic, 4);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.samples.size()));
  put<std::uint32_t>(out, data.steps);
  put<std::uint32_t>(out, data.width);
  const std::size_t n = static_cast<std::size_t>(data.steps) * data.width;
  for (const auto& s : data.samples) {
    if (s.features.size() != n) fail(ErrorCode::ShapeMismatch, "sample is not T x D");
    put<std::uint8_t>(out, s.label);
    put<std::uint8_t>(out, s.gain_index);
    put<std::uint16_t>(out, 0);
    put<std::uint32_t>(out, s.session);
    out.write(reinterpret_cast<const char*>(s.features.data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0) fail(ErrorCode::BadMagic, path + " is not a BLCD dataset");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kDatasetVersion) fail(ErrorCode::VersionMismatch, path + ": dataset version " + std::to_string(version));
  Dataset d;
  const auto count = get<std::uint32_t>(in, path);
  d.steps = get<std::uint32_t>(in, path);
  d.width = get<std::uint32_t>(in, path);
  if (d.steps != kSubframesPerFrame) fail(ErrorCode::ShapeMismatch, path + ": T must be 10");
  const std::size_t n = static_cast<std::size_t>(d.steps) * d.width;
  std::map<std::uint32_t, std::uint32_t> position;
  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.label = get<std::uint8_t>(in, path);
    s.gain_index = get<std::uint8_t>(in, path);
    get<std::uint16_t>(in, path);
    s.session = get<std::uint32_t>(in, path);
    if (s.label >= kAllLabels.size()) fail(ErrorCode::LabelOutOfRange, path + ": label " + std::to_string(s.label));
    if (s.gain_index >= GainLevel::kCount) {
      fail(ErrorCode::RangeViolation, path + ": gain index " + std::to_string(s.gain_index));
    }
    s.frame = position[s.session]++;
    s.features.resize(n);
    in.read(reinterpret_cast<char*>(s.features.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) fail(ErrorCode::IoFailure, path + ": truncated dataset");
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorCode::IoFailure, path + ": trailing bytes");
  return d;
}

Dataset preprocess_directory(const std::string& dir, const FeatureSchema& schema, std::size_t window) {
  namespace fs = std::filesystem;
  schema.validate();
  std::vector<std::string> files;
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json j;
    try {
      j = json::parse(in);
      for (const auto& s : j.at("sessions")) files.push_back((fs::path(dir) / s.at("file").get<std::string>()).string());
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedLine, manifest.string() + ": " + e.what());
    }
  } else {
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
      if (entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
    }
    if (ec) fail(ErrorCode::IoFailure, "cannot list " + dir + ": " + ec.message());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) fail(ErrorCode::EmptyInput, "no session files in " + dir);

  std::vector<std::vector<ChannelFeatureMatrix>> per_session(files.size());
  std::vector<std::exception_ptr> errors(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      per_session[i] = session_matrices(read_session(files[i]), static_cast<std::uint32_t>(i), schema, window);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<ChannelFeatureMatrix> all;
  for (auto& s : per_session) std::move(s.begin(), s.end(), std::back_inserter(all));
  Dataset d = to_dataset(all);
  d.width = static_cast<std::uint32_t>(schema.width());
  return d;
}

// ---- normalization ------------------------------------------------------------

void NormStats::apply(std::span<float> values) const {
  const std::size_t d = mean.size();
  if (d == 0 || values.size() % d != 0) fail(ErrorCode::ShapeMismatch, "normalization width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t j = i % d;
    values[i] = static_cast<float>((values[i] - mean[j]) / sigma[j]);
  }
}

void NormStats::apply(Dataset& data) const {
  if (mean.size() != data.width) fail(ErrorCode::ShapeMismatch, "stats width differs from dataset D");
  for (auto& s : data.samples) apply(std::span<float>(s.features));
}

NormStats normalize_dataset(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorCode::EmptyInput, "normalization needs at least one sample");
  const std::size_t d = data.width;
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  double rows = 0;
  for (auto idx : indices) {
    const auto& f = data.samples.at(idx).features;
    for (std::size_t t = 0; t < data.steps; ++t) {
      for (std::size_t j = 0; j < d; ++j) sum[j] += f[t * d + j];
      rows += 1;
    }
  }
  NormStats s;
  s.mean.resize(d);
  s.sigma.resize(d);
  for (std::size_t j = 0; j < d; ++j) s.mean[j] = sum[j] / rows;
  for (auto idx : indices) {
    const auto& f = data.samples[idx].features;
    for (std::size_t t = 0; t < data.steps; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = f[t * d + j] - s.mean[j];
        sq[j] += c * c;
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) s.sigma[j] = std::max(std::sqrt(sq[j] / rows), kSigmaFloor);
  return s;
}

json stats_to_json(const NormStats& stats, const FeatureSchema& schema) {
  return json{{"schema_version", schema.version},
              {"features", schema.feature_names()},
              {"mean", stats.mean},
              {"sigma", stats.sigma}};
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  try {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.sigma = j.at("sigma").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("normalization stats: ") + e.what());
  }
  if (s.mean.size() != s.sigma.size()) fail(ErrorCode::ShapeMismatch, "stats mean/sigma lengths differ");
  return s;
}

}  // namespace bilcnet
