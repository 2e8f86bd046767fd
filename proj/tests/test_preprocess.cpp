// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"

#include "bilcnet/error.hpp"
#include "bilcnet/eval.hpp"
#include "bilcnet/preprocess.hpp"
#include "bilcnet/synth_gen.hpp"
#include "support.hpp"

using namespace bilcnet;

namespace {

const FeatureSchema& schema() { return FeatureSchema::default_v1(); }

std::size_t col(const std::string& name) {
  const auto names = schema().feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  REQUIRE(it != names.end());
  return static_cast<std::size_t>(it - names.begin());
}

PhysicalChannelRecord pusch(std::uint32_t tb, std::uint32_t prb, double snr) {
  PhysicalChannelRecord r;
  r.chan = ChannelKind::PUSCH;
  r.dir = Direction::UL;
  r.tb_len = tb;
  r.prb = prb;
  r.snr = snr;
  return r;
}

PhysicalChannelRecord pdsch(std::uint8_t subframe, bool ok) {
  PhysicalChannelRecord r;
  r.subframe = subframe;
  r.chan = ChannelKind::PDSCH;
  r.dir = Direction::DL;
  r.crc_ok = ok;
  r.tb_len = 1000;
  r.prb = 10;
  r.mod_order = 4;
  return r;
}

}  // namespace

TEST_CASE("default schema") {
  schema().validate();
  CHECK(schema().width() == 61);
  CHECK(schema().width() >= 60);
  const auto names = schema().feature_names();
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
}

TEST_CASE("build_subframe_vector reductions") {
  const auto empty = build_subframe_vector({}, schema());
  CHECK(empty.size() == 61);
  CHECK(std::all_of(empty.begin(), empty.end(), [](double v) { return v == 0.0; }));

  const std::vector<PhysicalChannelRecord> one = {pusch(4096, 20, 21.5)};
  const auto v = build_subframe_vector(one, schema());
  CHECK(v[col("pusch.tb_len_sum")] == 4096);
  CHECK(v[col("pusch.prb_sum")] == 20);
  CHECK(v[col("pusch.snr_mean")] == 21.5);
  CHECK(v[col("pusch.count")] == 1);
  CHECK(v[col("pusch.present")] == 1);
  const auto names = schema().feature_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].rfind("pdsch.", 0) == 0 || names[i].rfind("pdcch.", 0) == 0 || names[i].rfind("pucch.", 0) == 0) {
      CHECK(v[i] == 0.0);
    }
  }

  const std::vector<PhysicalChannelRecord> two = {pusch(100, 1, 1.0), pusch(300, 1, 1.0)};
  const auto w = build_subframe_vector(two, schema());
  CHECK(w[col("pusch.tb_len_sum")] == 400);
  CHECK(w[col("pusch.count")] == 2);
}

TEST_CASE("build_frame_matrix rows and permutation invariance") {
  std::vector<PhysicalChannelRecord> recs = {pusch(10, 2, 3.0), pdsch(9, true)};
  recs[0].subframe = 0;
  const auto m = build_frame_matrix(recs, schema(), TrafficLabel::Call, GainLevel(64));
  REQUIRE(m.values.size() == 10 * 61);
  for (std::size_t t = 1; t <= 8; ++t) {
    for (std::size_t c = 0; c < 61; ++c) CHECK(m.at(t, c) == 0.0f);
  }
  CHECK(m.at(0, col("pusch.tb_len_sum")) == 10.0f);
  CHECK(m.at(9, col("pdsch.count")) == 1.0f);

  const auto empty = build_frame_matrix({}, schema(), TrafficLabel::Call, GainLevel(64));
  CHECK(std::all_of(empty.values.begin(), empty.values.end(), [](float v) { return v == 0.0f; }));

  const Session s = parse_session(generate_session(TrafficLabel::Meeting, GainLevel(76), 3, 5), "mem");
  std::vector<PhysicalChannelRecord> frame;
  for (const auto& r : s.records) {
    if (r.frame == s.records.front().frame) frame.push_back(r);
  }
  REQUIRE(frame.size() > 5);
  const auto ref = build_frame_matrix(frame, schema(), TrafficLabel::Meeting, GainLevel(76));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(frame.begin(), frame.end(), rng);
    CHECK(build_frame_matrix(frame, schema(), TrafficLabel::Meeting, GainLevel(76)).values == ref.values);
  }
}

TEST_CASE("error rate") {
  CHECK(compute_err({10, 10, Direction::DL}) == 0.0);
  CHECK(compute_err({0, 5, Direction::DL}) == 1.0);
  CHECK(compute_err({9, 10, Direction::DL}) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(compute_err({0, 0, Direction::UL}) == 0.0);
  CHECK_THROWS_AS(compute_err({3, 2, Direction::UL}), Error);
}

TEST_CASE("pdsch efficiency") {
  CHECK(compute_pdsch_eff(1000, 100) == 10.0);
  CHECK(compute_pdsch_eff(0, 50) == 0.0);
  CHECK(compute_pdsch_eff(0, 0) == 0.0);
  CHECK_THROWS_AS(compute_pdsch_eff(-1, 1), Error);
}

TEST_CASE("modulation variability") {
  const std::vector<int> constant = {4, 4, 4, 4}, none = {}, pair = {2, 4};
  CHECK(compute_mvi(constant) == 0.0);
  CHECK(compute_mvi(none) == 0.0);
  // population sigma 1 over mean 3
  CHECK(compute_mvi(pair) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("augment_features broadcasts the error rate") {
  std::vector<PhysicalChannelRecord> recs;
  for (std::uint8_t i = 0; i < 10; ++i) recs.push_back(pdsch(i, i != 0));
  auto m = build_frame_matrix(recs, schema(), TrafficLabel::Download, GainLevel(80));
  const FrameAggregates agg = aggregate_frame(recs);
  augment_features(m, schema(), std::span<const FrameAggregates>(&agg, 1));
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(m.at(t, col("err_dl")) == doctest::Approx(0.1));
    CHECK(m.at(t, col("err_ul")) == 0.0f);
    CHECK(m.at(t, col("eff_pdsch")) == doctest::Approx(100.0));
    CHECK(m.at(t, col("mvi_dl")) == 0.0f);
    // a single-frame window has zero spread and its own value as mean
    CHECK(m.at(t, col("roll_mean.tb_len.dl")) == doctest::Approx(10000.0));
    CHECK(m.at(t, col("roll_std.tb_len.dl")) == 0.0f);
  }

  auto zero = build_frame_matrix({}, schema(), TrafficLabel::Call, GainLevel(64));
  const FrameAggregates none = aggregate_frame({});
  augment_features(zero, schema(), std::span<const FrameAggregates>(&none, 1));
  CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("rolling statistics over two frames") {
  const std::vector<PhysicalChannelRecord> a = {pusch(100, 1, 0)}, b = {pusch(300, 1, 0)};
  const std::vector<FrameAggregates> window = {aggregate_frame(a), aggregate_frame(b)};
  auto m = build_frame_matrix(b, schema(), TrafficLabel::Call, GainLevel(64));
  augment_features(m, schema(), window);
  CHECK(m.at(0, col("roll_mean.tb_len.ul")) == doctest::Approx(200.0));
  CHECK(m.at(0, col("roll_std.tb_len.ul")) == doctest::Approx(100.0));
}

TEST_CASE("session matrices cover every frame") {
  const Session s = parse_session(generate_session(TrafficLabel::Upload, GainLevel(68), 25, 2), "mem");
  const auto ms = session_matrices(s, 3, schema());
  CHECK(ms.size() == 25);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(ms[i].values.size() == 10 * 61);
    CHECK(ms[i].session == 3);
    CHECK(ms[i].frame == ms.front().frame + i);
  }
}

TEST_CASE("dataset file round trip and corruption") {
  const auto dir = testing::scratch_dir("blcd");
  generate_dataset((dir / "d").string(), 12, 4);
  const Dataset d = preprocess_directory((dir / "d").string(), schema());
  CHECK(d.samples.size() == 44 * 12);
  CHECK(d.width == 61);
  CHECK(d.steps == 10);
  const auto path = (dir / "x.blcd").string();
  write_dataset(path, d);
  const Dataset r = read_dataset(path);
  REQUIRE(r.samples.size() == d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(r.samples[i].label == d.samples[i].label);
    CHECK(r.samples[i].gain_index == d.samples[i].gain_index);
    CHECK(r.samples[i].session == d.samples[i].session);
    CHECK(r.samples[i].features == d.samples[i].features);
  }
  // frame order within a session survives since it is implied by file order
  CHECK(temporal_split(r, 0.8).test == temporal_split(d, 0.8).test);

  std::string bytes = testing::slurp(path);
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_dataset(path), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  try {
    read_dataset(path);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
}

TEST_CASE("normalization") {
  Dataset d;
  d.steps = 1;
  d.width = 2;
  for (int i = 0; i < 6; ++i) {
    Sample s;
    s.features = {static_cast<float>(i * i), 5.0f};
    d.samples.push_back(s);
  }
  std::vector<std::size_t> idx(6);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const NormStats st = normalize_dataset(d, idx);
  CHECK(st.sigma[1] == kSigmaFloor);
  st.apply(d);
  double mean = 0, sq = 0;
  for (const auto& s : d.samples) {
    CHECK(s.features[1] == 0.0f);
    mean += s.features[0];
  }
  mean /= 6;
  for (const auto& s : d.samples) sq += (s.features[0] - mean) * (s.features[0] - mean);
  CHECK(std::abs(mean) < 1e-6);
  const double sigma = std::sqrt(sq / 6);
  CHECK(sigma >= 0.999);
  CHECK(sigma <= 1.001);

  const NormStats back = stats_from_json(stats_to_json(st, FeatureSchema{1, {}, {"a", "b"}}));
  CHECK(back.mean == st.mean);
  CHECK(back.sigma == st.sigma);
}

TEST_CASE("normalization uses only the indexed samples") {
  Dataset d;
  d.steps = 1;
  d.width = 1;
  for (float v : {1.0f, 3.0f, 1000.0f}) d.samples.push_back(Sample{0, 0, 0, 0, {v}});
  const std::vector<std::size_t> train = {0, 1};
  const NormStats st = normalize_dataset(d, train);
  CHECK(st.mean[0] == 2.0);
  CHECK(st.sigma[0] == 1.0);
}
