// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"

#include "bilcnet/error.hpp"
#include "bilcnet/eval.hpp"

using namespace bilcnet;

namespace {

Dataset grid(std::size_t frames_per_session, std::size_t gains = GainLevel::kCount) {
  Dataset d;
  d.steps = 1;
  d.width = 1;
  std::uint32_t session = 0;
  for (std::size_t g = 0; g < gains; ++g) {
    for (std::uint8_t label = 0; label < 4; ++label, ++session) {
      for (std::size_t f = 0; f < frames_per_session; ++f) {
        d.samples.push_back(Sample{label, static_cast<std::uint8_t>(g), session, static_cast<std::uint32_t>(f), {0.0f}});
      }
    }
  }
  return d;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoFailure;
}

bool within(double value, double expect, double tol_pp) { return std::abs(100.0 * value - expect) <= tol_pp + 1e-9; }

}  // namespace

TEST_CASE("temporal split by hand") {
  const Dataset d = grid(10, 1);
  const Splits s = temporal_split(d, 0.8);
  CHECK(s.train.size() == 32);
  CHECK(s.val.size() == 4);
  CHECK(s.test.size() == 4);
  for (std::size_t i : s.train) CHECK(d.samples[i].frame <= 7);
  for (std::size_t i : s.val) CHECK(d.samples[i].frame == 8);
  for (std::size_t i : s.test) CHECK(d.samples[i].frame == 9);
  CHECK(code_of([] { temporal_split(grid(1, 1), 0.8); }) == ErrorCode::SessionTooShort);
}

TEST_CASE("temporal split never leaks forward in time") {
  const Dataset d = grid(37, 2);
  const Splits s = temporal_split(d, 0.8);
  CHECK(s.train.size() + s.val.size() + s.test.size() == d.samples.size());
  for (std::uint32_t session = 0; session < 8; ++session) {
    std::uint32_t max_train = 0, min_test = ~0u;
    for (std::size_t i : s.train)
      if (d.samples[i].session == session) max_train = std::max(max_train, d.samples[i].frame);
    for (std::size_t i : s.test)
      if (d.samples[i].session == session) min_test = std::min(min_test, d.samples[i].frame);
    CHECK(max_train < min_test);
  }
}

TEST_CASE("zero-shot folds") {
  const Dataset d = grid(3);
  const auto folds = zero_shot_folds(d);
  REQUIRE(folds.size() == 11);
  std::multiset<std::size_t> tested;
  for (std::size_t g = 0; g < folds.size(); ++g) {
    CHECK(folds[g].held_out.db() == 64 + 2 * static_cast<int>(g));
    for (std::size_t i : folds[g].train) CHECK(d.samples[i].gain_index != g);
    for (std::size_t i : folds[g].test) CHECK(d.samples[i].gain_index == g);
    CHECK(folds[g].train.size() + folds[g].test.size() == d.samples.size());
    tested.insert(folds[g].test.begin(), folds[g].test.end());
  }
  CHECK(tested.size() == d.samples.size());
  CHECK(std::set<std::size_t>(tested.begin(), tested.end()).size() == d.samples.size());
  CHECK(code_of([] { zero_shot_folds(grid(3, 10)); }) == ErrorCode::MissingGain);
}

TEST_CASE("validation carve") {
  const Dataset d = grid(20, 1);
  std::vector<std::size_t> idx(d.samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto [train, val] = carve_validation(d, idx, 0.1);
  CHECK(train.size() == 72);
  CHECK(val.size() == 8);
  for (std::size_t i : val) CHECK(d.samples[i].frame >= 18);
}

TEST_CASE("confusion matrix") {
  const std::vector<int> y = {0, 1, 2, 3, 3};
  auto cm = confusion(y, y);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(cm.counts[i][j] == (i == j ? (i == 3 ? 2u : 1u) : 0u));
  CHECK(cm.total() == 5);
  cm = confusion(std::vector<int>{0, 1}, std::vector<int>{1, 0});
  CHECK(cm.counts[0][1] == 1);
  CHECK(cm.counts[1][0] == 1);
  CHECK(code_of([] { confusion(std::vector<int>{0}, std::vector<int>{0, 1}); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("macro aggregation of the reference per-class rows") {
  const std::array<ClassMetrics, 4> rows = {ClassMetrics{0.7524, 0.8744, 0.8088}, ClassMetrics{0.8865, 0.8946, 0.8905},
                                            ClassMetrics{0.9881, 0.9711, 0.9795}, ClassMetrics{0.9841, 0.9404, 0.9618}};
  const ClassMetrics m = macro_average(rows);
  CHECK(within(m.precision, 90.28, 0.005));
  CHECK(within(m.recall, 92.01, 0.005));
  CHECK(within(m.f1, 91.01, 0.005));
}

TEST_CASE("metrics from a confusion matrix") {
  ConfusionMatrix cm;
  cm.counts = {{{{8, 2, 0, 0}}, {{1, 5, 0, 4}}, {{0, 0, 7, 0}}, {{0, 0, 3, 0}}}};
  const auto r = metrics(cm);
  // hand-computed: column sums 9, 7, 10, 4; row sums 10, 10, 7, 3
  CHECK(r.per_class[0].precision == doctest::Approx(8.0 / 9));
  CHECK(r.per_class[0].recall == doctest::Approx(0.8));
  CHECK(r.per_class[1].precision == doctest::Approx(5.0 / 7));
  CHECK(r.per_class[2].precision == doctest::Approx(0.7));
  CHECK(r.per_class[2].recall == 1.0);
  CHECK(r.per_class[3].precision == 0.0);
  CHECK(r.per_class[3].f1 == 0.0);
  CHECK(r.accuracy == doctest::Approx(20.0 / 30));
  double f1 = 0;
  for (const auto& c : r.per_class) {
    CHECK(c.precision >= 0);
    CHECK(c.recall <= 1);
    f1 += c.f1;
  }
  CHECK(r.macro.f1 == doctest::Approx(f1 / 4));

  ConfusionMatrix diag;
  for (std::size_t i = 0; i < 4; ++i) diag.counts[i][i] = 3;
  const auto d = metrics(diag);
  CHECK(d.accuracy == 1.0);
  CHECK(d.macro.precision == 1.0);
  CHECK(d.macro.f1 == 1.0);

  ConfusionMatrix absent;
  absent.counts[0][0] = 2;
  absent.counts[1][1] = 2;
  absent.counts[2][2] = 2;
  const auto a = metrics(absent);
  CHECK(a.per_class[3].precision == 0.0);
  CHECK(a.per_class[3].recall == 0.0);
  CHECK(a.macro.f1 == doctest::Approx(0.75));

  CHECK(code_of([] { metrics(ConfusionMatrix{}); }) == ErrorCode::EmptyMatrix);
}

TEST_CASE("report json") {
  ConfusionMatrix cm;
  cm.counts[0][0] = 1;
  cm.counts[1][2] = 1;
  const auto j = report_to_json(cm, metrics(cm));
  CHECK(j.at("per_class").size() == 4);
  CHECK(j.at("overall").size() == 4);
  CHECK(j.at("confusion").at(1).at(2) == 1);
  CHECK(j.at("per_class").at(3).at("label") == "download");
}

TEST_CASE("zero-shot report") {
  std::vector<std::pair<GainLevel, double>> ones, ramp;
  for (std::size_t g = 0; g < 11; ++g) {
    ones.emplace_back(GainLevel::from_index(g), 1.0);
    ramp.emplace_back(GainLevel::from_index(g), 0.5 + 0.05 * static_cast<double>(g));
  }
  CHECK(zero_shot_report(ones).mean == 1.0);
  const auto r = zero_shot_report(ramp);
  CHECK(r.mean == doctest::Approx(0.75).epsilon(1e-12));
  const auto j = to_json(r);
  CHECK(j.at("per_gain").size() == 11);
  CHECK(j.at("per_gain").contains("64"));
  CHECK(j.at("per_gain").contains("84"));
  ramp.pop_back();
  CHECK(code_of([&] { zero_shot_report(ramp); }) == ErrorCode::WrongFoldCount);
}
