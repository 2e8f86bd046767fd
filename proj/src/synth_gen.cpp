// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/synth_gen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "bilcnet/error.hpp"

namespace bilcnet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void TrafficProfile::validate() const {
  if (!probability(ul_activity) || !probability(dl_activity) || !probability(dual_slot_prob)) {
    fail(ErrorCode::InvalidConfig, "profile activity probabilities must lie in [0,1]");
  }
  for (double v : {tb_len_log_mean_ul, tb_len_log_mean_dl, tb_len_log_sd_ul, tb_len_log_sd_dl}) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidConfig, "profile log-normal parameters must be finite");
  }
  if (tb_len_log_sd_ul < 0 || tb_len_log_sd_dl < 0) fail(ErrorCode::InvalidConfig, "negative log sd");
  if (!(burstiness >= 0.0 && burstiness < 1.0)) fail(ErrorCode::InvalidConfig, "burstiness must be in [0,1)");
  if (prb_mean_ul < 0 || prb_mean_dl < 0) fail(ErrorCode::InvalidConfig, "negative prb mean");
  if (periodicity_ms && *periodicity_ms <= 0) fail(ErrorCode::InvalidConfig, "periodicity must be positive");
}

TrafficProfile default_profile(TrafficLabel label) {
  TrafficProfile p;
  p.label = label;
  switch (label) {
    case TrafficLabel::Call:
      // Voice codec: one small packet per direction every 20 ms.
      p.ul_activity = 0.04;
      p.dl_activity = 0.04;
      p.tb_len_log_mean_ul = std::log(280.0);
      p.tb_len_log_mean_dl = std::log(280.0);
      p.tb_len_log_sd_ul = 0.25;
      p.tb_len_log_sd_dl = 0.25;
      p.prb_mean_ul = 4;
      p.prb_mean_dl = 4;
      p.burstiness = 0.0;
      p.periodicity_ms = 20;
      break;
    case TrafficLabel::Meeting:
      p.ul_activity = 0.35;
      p.dl_activity = 0.45;
      p.tb_len_log_mean_ul = std::log(2500.0);
      p.tb_len_log_mean_dl = std::log(3500.0);
      p.tb_len_log_sd_ul = 0.6;
      p.tb_len_log_sd_dl = 0.6;
      p.prb_mean_ul = 18;
      p.prb_mean_dl = 24;
      p.burstiness = 0.6;
      p.dual_slot_prob = 0.15;
      break;
    case TrafficLabel::Upload:
      p.ul_activity = 0.9;
      p.dl_activity = 0.1;
      p.tb_len_log_mean_ul = std::log(18000.0);
      p.tb_len_log_mean_dl = std::log(150.0);
      p.tb_len_log_sd_ul = 0.35;
      p.tb_len_log_sd_dl = 0.3;
      p.prb_mean_ul = 60;
      p.prb_mean_dl = 3;
      p.burstiness = 0.3;
      p.dual_slot_prob = 0.5;
      break;
    case TrafficLabel::Download:
      p.ul_activity = 0.1;
      p.dl_activity = 0.9;
      p.tb_len_log_mean_ul = std::log(150.0);
      p.tb_len_log_mean_dl = std::log(24000.0);
      p.tb_len_log_sd_ul = 0.3;
      p.tb_len_log_sd_dl = 0.35;
      p.prb_mean_ul = 3;
      p.prb_mean_dl = 80;
      p.burstiness = 0.3;
      p.dual_slot_prob = 0.5;
      break;
  }
  return p;
}

ChannelQualityModel ChannelQualityModel::for_gain(GainLevel gain) {
  const double offset = gain.db() - GainLevel::kMinDb;
  ChannelQualityModel q;
  q.gain = gain;
  q.snr_mean = 0.9 * offset + 3.0;
  q.snr_sd = 2.0;
  q.bler_base = 0.30 - 0.0125 * offset;
  q.epre_mean = -105.0 + offset;
  return q;
}

std::uint8_t mod_order_for_mcs(std::uint8_t mcs) {
  if (mcs <= 9) return 2;
  if (mcs <= 16) return 4;
  if (mcs <= 27) return 6;
  return 8;
}

std::uint64_t session_seed(std::uint64_t root, TrafficLabel label, GainLevel gain) {
  const std::uint64_t key = (static_cast<std::uint64_t>(label) << 8) | static_cast<std::uint64_t>(gain.db());
  return root ^ splitmix64(key);
}

namespace {

class SessionBuilder {
 public:
  SessionBuilder(const TrafficProfile& profile, const ChannelQualityModel& quality, std::uint64_t frames,
                 std::uint64_t seed)
      : p_(profile), q_(quality), frames_(frames), rng_(seed) {}

  std::vector<PhysicalChannelRecord> run() {
    std::uniform_int_distribution<int> phase_dist(0, 9);
    const int phase = phase_dist(rng_);
    bool ul_on = bernoulli(p_.ul_activity);
    bool dl_on = bernoulli(p_.dl_activity);

    PhysicalChannelRecord prach = base(0, 0, 0, ChannelKind::PRACH);
    prach.epre = normal(q_.epre_mean, 1.0);
    out_.push_back(prach);

    // HARQ feedback for DL data is sent four subframes later.
    std::vector<std::vector<std::uint64_t>> pending(4);
    for (std::uint64_t frame = 0; frame < frames_; ++frame) {
      for (std::uint8_t sf = 0; sf < 10; ++sf) {
        const std::uint64_t abs_sf = frame * 10 + sf;
        ul_on = step(ul_on, p_.ul_activity);
        dl_on = step(dl_on, p_.dl_activity);
        bool ul = ul_on, dl = dl_on;
        if (p_.periodicity_ms) {
          const auto period = static_cast<std::uint64_t>(*p_.periodicity_ms);
          const std::uint64_t pos = (abs_sf + static_cast<std::uint64_t>(phase)) % period;
          ul = ul || pos == 0;
          dl = dl || pos == period / 2;
        }

        if (sf == 0) out_.push_back(pucch(frame, sf, 2));
        auto& due = pending[abs_sf % 4];
        for (std::size_t i = 0; i < due.size(); ++i) out_.push_back(pucch(frame, sf, 1));
        due.clear();

        std::size_t dl_grants = 0;
        if (dl) dl_grants = shared(frame, sf, Direction::DL);
        if (ul) shared(frame, sf, Direction::UL);
        pending[abs_sf % 4].assign(dl_grants, abs_sf);
      }
    }
    return std::move(out_);
  }

 private:
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(rng_); }
  double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng_); }

  // Two-state Markov chain with stationary probability `a`.
  bool step(bool on, double a) {
    const double b = p_.burstiness;
    return bernoulli(on ? a + b * (1.0 - a) : a * (1.0 - b));
  }

  PhysicalChannelRecord base(std::uint64_t frame, std::uint8_t sf, std::uint8_t slot, ChannelKind chan) {
    PhysicalChannelRecord r;
    r.frame = frame;
    r.subframe = sf;
    r.slot = slot;
    r.chan = chan;
    r.dir = direction_of(chan);
    return r;
  }

  double quantized(double v) { return std::round(v * 100.0) / 100.0 + 0.0; }

  PhysicalChannelRecord pucch(std::uint64_t frame, std::uint8_t sf, std::uint8_t format) {
    PhysicalChannelRecord r = base(frame, sf, 1, ChannelKind::PUCCH);
    r.snr = quantized(normal(q_.snr_mean, q_.snr_sd));
    r.epre = quantized(normal(q_.epre_mean, 1.0));
    r.pucch_format = format;
    return r;
  }

  std::uint8_t aggregation_for(double snr) {
    if (snr < 5) return 8;
    if (snr < 10) return 4;
    if (snr < 18) return 2;
    return 1;
  }

  std::size_t shared(std::uint64_t frame, std::uint8_t sf, Direction dir) {
    const bool up = dir == Direction::UL;
    std::vector<std::uint8_t> slots;
    if (bernoulli(p_.dual_slot_prob)) {
      slots = {0, 1};
    } else {
      slots = {static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 1)(rng_))};
    }
    for (std::uint8_t slot : slots) {
      const double snr = normal(q_.snr_mean, q_.snr_sd);
      const auto mcs = static_cast<std::uint8_t>(std::clamp(std::round(1.2 * snr + normal(0.0, 1.5)), 0.0, 28.0));
      const double bler = std::clamp(q_.bler_base * std::exp(-0.15 * (snr - q_.snr_mean)), 0.001, 0.5);

      PhysicalChannelRecord dci = base(frame, sf, slot, ChannelKind::PDCCH);
      const std::uint8_t al = aggregation_for(snr);
      dci.snr = quantized(snr);
      dci.epre = quantized(normal(q_.epre_mean, 1.0));
      dci.cce_index = static_cast<std::uint32_t>(std::uniform_int_distribution<int>(0, 15 / al)(rng_)) * al;
      dci.aggregation_level = al;
      out_.push_back(dci);

      PhysicalChannelRecord r = base(frame, sf, slot, up ? ChannelKind::PUSCH : ChannelKind::PDSCH);
      const double log_mean = up ? p_.tb_len_log_mean_ul : p_.tb_len_log_mean_dl;
      const double log_sd = up ? p_.tb_len_log_sd_ul : p_.tb_len_log_sd_dl;
      const double spectral = 0.6 + 0.4 * mcs / 28.0;
      const double prb_mean = up ? p_.prb_mean_ul : p_.prb_mean_dl;
      r.mcs = mcs;
      r.mod_order = mod_order_for_mcs(mcs);
      auto& harq = up ? harq_ul_ : harq_dl_;
      r.harq_id = static_cast<std::uint8_t>(harq++ % 16);
      r.crc_ok = bernoulli(1.0 - bler);
      r.tb_len = static_cast<std::uint32_t>(std::max(16.0, std::round(std::exp(normal(log_mean, log_sd)) * spectral)));
      r.prb = static_cast<std::uint32_t>(std::clamp(std::round(normal(prb_mean, 0.25 * prb_mean)), 1.0, 273.0));
      r.symb_start = up ? 0 : 2;
      r.symb_len = static_cast<std::uint8_t>(up ? 14 : 12 - std::uniform_int_distribution<int>(0, 1)(rng_) * 2);
      r.snr = quantized(snr);
      r.epre = quantized(normal(q_.epre_mean, 1.0));
      out_.push_back(r);
    }
    return up ? 0 : slots.size();
  }

  const TrafficProfile& p_;
  const ChannelQualityModel& q_;
  std::uint64_t frames_;
  std::mt19937_64 rng_;
  std::uint64_t harq_ul_ = 0;
  std::uint64_t harq_dl_ = 0;
  std::vector<PhysicalChannelRecord> out_;
};

}  // namespace

std::vector<PhysicalChannelRecord> generate_records(const TrafficProfile& profile,
                                                    const ChannelQualityModel& quality,
                                                    std::uint64_t frames, std::uint64_t seed) {
  if (frames == 0) fail(ErrorCode::RangeViolation, "frames must be >= 1");
  profile.validate();
  return SessionBuilder(profile, quality, frames, seed).run();
}

std::string generate_session(TrafficLabel label, GainLevel gain, std::uint64_t frames, std::uint64_t seed) {
  const auto records =
      generate_records(default_profile(label), ChannelQualityModel::for_gain(gain), frames, seed);
  std::string out = serialize_session_header({label, gain, seed, kSchemaVersion});
  out += '\n';
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["root_seed"] = root_seed;
  j["sessions"] = nlohmann::ordered_json::array();
  for (const auto& e : sessions) {
    nlohmann::ordered_json s;
    s["file"] = e.file;
    s["label"] = std::string(to_string(e.label));
    s["gain_db"] = e.gain_db;
    s["records"] = e.records;
    j["sessions"].push_back(std::move(s));
  }
  return j.dump(2) + "\n";
}

Manifest generate_dataset(const std::string& out_dir, std::uint64_t frames_per_session, std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir + ": " + ec.message());

  Manifest m;
  m.root_seed = seed;
  const auto gains = GainLevel::all();
  const std::size_t total = kAllLabels.size() * gains.size();
  m.sessions.resize(total);
  std::vector<std::string> errors(total);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < total; ++i) {
    const TrafficLabel label = kAllLabels[i / gains.size()];
    const GainLevel gain = gains[i % gains.size()];
    const std::string name = std::string(to_string(label)) + "_" + std::to_string(gain.db()) + ".jsonl";
    const std::string content = generate_session(label, gain, frames_per_session, session_seed(seed, label, gain));
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) errors[i] = "cannot write " + (fs::path(out_dir) / name).string();
    m.sessions[i] = {name, label, gain.db(),
                     static_cast<std::size_t>(std::count(content.begin(), content.end(), '\n')) - 1};
  }
  for (const auto& e : errors) {
    if (!e.empty()) fail(ErrorCode::IoFailure, e);
  }

  std::ofstream out(fs::path(out_dir) / kManifestName, std::ios::binary | std::ios::trunc);
  out << m.to_json();
  if (!out) fail(ErrorCode::IoFailure, "cannot write manifest in " + out_dir);
  return m;
}

}  // namespace bilcnet
