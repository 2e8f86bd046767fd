// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. One PASS/FAIL line per criterion; exits 1
// when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bilcnet/cli.hpp"
#include "bilcnet/conformer.hpp"
#include "bilcnet/error.hpp"
#include "bilcnet/eval.hpp"
#include "bilcnet/grad_check.hpp"
#include "bilcnet/model.hpp"
#include "bilcnet/preprocess.hpp"
#include "bilcnet/record_schema.hpp"
#include "bilcnet/synth_gen.hpp"
#include "bilcnet/train.hpp"

namespace fs = std::filesystem;
using namespace bilcnet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path work_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bilcnet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  if (rc != kExitOk) std::fprintf(stderr, "bilcnet %s failed (%d): %s\n", args[0].c_str(), rc, err.str().c_str());
  return rc;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

// ---- 1 ---------------------------------------------------------------------

Outcome reference_macro() {
  const std::array<ClassMetrics, 4> rows = {ClassMetrics{0.7524, 0.8744, 0.8088}, ClassMetrics{0.8865, 0.8946, 0.8905},
                                            ClassMetrics{0.9881, 0.9711, 0.9795}, ClassMetrics{0.9841, 0.9404, 0.9618}};
  const ClassMetrics m = macro_average(rows);
  // inclusive bound; 1e-9 absorbs the decimal representation of the inputs
  auto within = [](double v, double expect) { return std::abs(100.0 * v - expect) <= 0.005 + 1e-9; };
  Outcome o;
  o.pass = within(m.precision, 90.28) && within(m.recall, 92.01) && within(m.f1, 91.01);
  o.detail = "PR " + fmt("%.4f", 100 * m.precision) + " RC " + fmt("%.4f", 100 * m.recall) + " F1 " +
             fmt("%.4f", 100 * m.f1);
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradient_verification() {
  const auto t0 = Clock::now();
  GradCheckOptions opt;
  opt.seed = 0;
  opt.seeds = 10;
  opt.include_f32 = true;
  const auto reports = run_grad_check_suite(opt);
  const double elapsed = seconds_since(t0);

  const std::vector<std::string> required = {"matmul",          "softmax",        "layer_norm",     "gelu",
                                             "batch_norm",      "depthwise_conv", "lstm_cell",      "mhsa",
                                             "conformer_block", "attention_pool", "classifier_head", "cross_entropy"};
  std::set<std::string> seen_f64, seen_f32;
  std::string failures;
  double worst64 = 0, worst32 = 0;
  for (const auto& r : reports) {
    (r.precision == "f64" ? seen_f64 : seen_f32).insert(r.name);
    (r.precision == "f64" ? worst64 : worst32) =
        std::max(r.precision == "f64" ? worst64 : worst32, r.max_rel_err);
    const double tol = r.precision == "f64" ? 1e-5 : 1e-3;
    if (!(r.max_rel_err < tol)) failures += " " + r.name + "/" + r.precision;
  }
  std::string missing;
  for (const auto& n : required) {
    if (!seen_f64.count(n)) missing += " " + n + "/f64";
    if (!seen_f32.count(n)) missing += " " + n + "/f32";
  }
  Outcome o;
  o.pass = failures.empty() && missing.empty() && elapsed < 120.0;
  o.detail = std::to_string(reports.size()) + " checks, worst f64 " + fmt("%.2e", worst64) + " f32 " +
             fmt("%.2e", worst32) + ", " + fmt("%.1f s", elapsed);
  if (!failures.empty()) o.detail += "; failed:" + failures;
  if (!missing.empty()) o.detail += "; missing:" + missing;
  return o;
}

// ---- 3 ---------------------------------------------------------------------

template <typename T>
double zeroed_block_deviation(BlockOrder order) {
  ConformerConfig c;
  c.order = order;
  ConformerBlock<T> block("blk", c);
  Rng rng(11);
  block.init(rng);
  block.zero_output_layers();
  const auto x = random_tensor<T>({4, 10, c.model_dim}, 12);
  double worst = 0;
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    const auto y = block.forward(x, mode, rng, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(y[i]) - static_cast<double>(x[i])));
  }
  return worst;
}

Outcome residual_identity() {
  double f32 = 0, f64 = 0;
  for (auto order : {BlockOrder::ConvFirst, BlockOrder::AttentionFirst}) {
    f32 = std::max(f32, zeroed_block_deviation<float>(order));
    f64 = std::max(f64, zeroed_block_deviation<double>(order));
  }
  Outcome o;
  o.pass = f32 <= 1e-7 && f64 == 0.0;
  o.detail = "max |y - x| f32 " + fmt("%.3g", f32) + ", f64 " + fmt("%.3g", f64);
  return o;
}

// ---- 4 ---------------------------------------------------------------------

Outcome loss_sanity() {
  const double ln4 = std::log(4.0);
  BiLCNet<float> net(BiLCNetConfig::with_input_dim(61));
  Rng rng(21);
  net.init(rng);
  net.head.fc2.weight.value.zero();
  net.head.fc2.bias.value.zero();
  double worst = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::size_t n = 3 + 7 * s;
    const auto x = random_tensor<float>({n, 10, 61}, 100 + s);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>((i * 7 + s) % 4);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      const auto logits = net.forward(x, mode, rng, nullptr);
      worst = std::max(worst, std::abs(cross_entropy<float>(logits, labels, nullptr) - ln4));
    }
  }
  Outcome o;
  o.pass = worst <= 1e-6;
  o.detail = "max |CE - ln 4| " + fmt("%.3g", worst);
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Dataset generated_dataset(const fs::path& dir, std::uint64_t frames, std::uint64_t seed) {
  generate_dataset(dir.string(), frames, seed);
  return preprocess_directory(dir.string(), FeatureSchema::default_v1());
}

Outcome overfit() {
  const auto dir = work_dir("overfit");
  Dataset data = generated_dataset(dir / "gen", 20, 5);
  // 16 samples per label, drawn across every gain
  std::vector<std::size_t> picked;
  std::array<std::size_t, 4> per_label{};
  for (std::size_t i = 0; i < data.samples.size(); i += 7) {
    const auto l = data.samples[i].label;
    if (per_label[l] < 16) {
      ++per_label[l];
      picked.push_back(i);
    }
  }
  Dataset subset{data.steps, data.width, {}};
  for (auto i : picked) subset.samples.push_back(data.samples[i]);
  std::vector<std::size_t> all(subset.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  normalize_dataset(subset, all).apply(subset);

  BiLCNet<float> net(BiLCNetConfig::with_input_dim(subset.width));
  Rng rng(7);
  net.init(rng);
  TrainConfig c;
  c.max_epochs = 200;
  c.early_stop_patience = 200;
  std::size_t first_full = 0;
  const auto t0 = Clock::now();
  const DataView view{&subset, all};
  fit(net, view, view, c, [&](const EpochRecord& r) {
    if (first_full == 0 && r.val_acc == 1.0) first_full = r.epoch;
  });
  const double elapsed = seconds_since(t0);
  // independent check on the restored weights
  const EvalResult final_eval = evaluate(net, view);
  Outcome o;
  o.pass = subset.samples.size() == 64 && first_full >= 1 && first_full <= 200 && final_eval.accuracy == 1.0 &&
           elapsed < 300.0;
  o.detail = std::to_string(subset.samples.size()) + " samples, 100% at epoch " + std::to_string(first_full) +
             ", final accuracy " + fmt("%.4f", final_eval.accuracy) + ", " + fmt("%.1f s", elapsed);
  return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome multi_scenario() {
  const auto dir = work_dir("scenario");
  const auto t0 = Clock::now();
  const std::string gen = (dir / "gen").string(), data = (dir / "data.blcd").string(),
                    model = (dir / "model.bin").string(), report = (dir / "report.json").string();
  Outcome o;
  if (cli({"gen", "--out", gen, "--frames", "200", "--seed", "1"}) != 0 ||
      cli({"preprocess", "--in", gen, "--out", data}) != 0 ||
      cli({"train", "--data", data, "--out", model, "--seed", "1"}) != 0 ||
      cli({"eval", "--data", data, "--model", model, "--report", report}) != 0) {
    o.detail = "pipeline failed";
    return o;
  }
  const double elapsed = seconds_since(t0);
  const auto j = nlohmann::json::parse(slurp(report));
  const double acc = j.at("overall").at("accuracy").get<double>();

  const Dataset ds = read_dataset(data);
  const Splits s = temporal_split(ds, 0.8);
  std::array<std::size_t, 4> counts{};
  for (auto i : s.test) ++counts[ds.samples[i].label];
  const double majority =
      static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(s.test.size());

  o.pass = ds.samples.size() == 4 * 11 * 200 && acc >= 0.90 && acc - majority >= 0.30 && elapsed < 900.0;
  o.detail = std::to_string(ds.samples.size()) + " samples, test accuracy " + fmt("%.4f", acc) + ", majority " +
             fmt("%.4f", majority) + ", " + fmt("%.1f s", elapsed);
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome zero_shot() {
  const auto dir = work_dir("zeroshot");
  const std::string gen = (dir / "gen").string(), data = (dir / "data.blcd").string(),
                    report = (dir / "zeroshot.json").string();
  Outcome o;
  const auto t0 = Clock::now();
  if (cli({"gen", "--out", gen, "--frames", "60", "--seed", "3"}) != 0 ||
      cli({"preprocess", "--in", gen, "--out", data}) != 0 ||
      cli({"zeroshot", "--data", data, "--report", report, "--epochs", "2", "--seed", "3"}) != 0) {
    o.detail = "pipeline failed";
    return o;
  }
  const double elapsed = seconds_since(t0);
  const auto j = nlohmann::json::parse(slurp(report));
  const auto& per_gain = j.at("per_gain");

  // fold structure recomputed from the dataset
  const Dataset ds = read_dataset(data);
  const auto folds = zero_shot_folds(ds);
  bool leak = false, partition = true;
  std::vector<int> covered(ds.samples.size(), 0);
  std::set<int> gains;
  for (const auto& f : folds) {
    gains.insert(f.held_out.db());
    for (auto i : f.train) leak |= ds.samples[i].gain_index == f.held_out.index();
    for (auto i : f.test) {
      partition &= ds.samples[i].gain_index == f.held_out.index();
      ++covered[i];
    }
    partition &= f.train.size() + f.test.size() == ds.samples.size();
  }
  partition &= std::all_of(covered.begin(), covered.end(), [](int c) { return c == 1; });
  bool keys_match = per_gain.size() == 11;
  for (int g : gains) keys_match &= per_gain.contains(std::to_string(g));
  const double mean = j.at("mean").get<double>();

  o.pass = folds.size() == 11 && gains.size() == 11 && keys_match && !leak && partition && mean >= 0.70;
  o.detail = std::to_string(folds.size()) + " folds, leakage " + (leak ? "yes" : "none") + ", test union " +
             (partition ? "= dataset" : "!= dataset") + ", mean accuracy " + fmt("%.4f", mean) + ", " +
             fmt("%.1f s", elapsed);
  return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome preprocessing_invariants() {
  const auto dir = work_dir("invariants");
  generate_dataset((dir / "gen").string(), 40, 8);
  const auto& schema = FeatureSchema::default_v1();
  const auto names = schema.feature_names();
  auto col = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
  };
  const std::size_t err_ul = col("err_ul"), err_dl = col("err_dl"), eff = col("eff_pdsch"),
                    mvi_dl = col("mvi_dl"), mvi_ul = col("mvi_ul");
  const std::size_t base = schema.slots.size(), d = schema.width();

  std::size_t shape_bad = 0, empty_rows = 0, empty_bad = 0, err_bad = 0, eff_bad = 0, const_windows = 0,
              mvi_bad = 0, lines = 0, line_bad = 0, matrices = 0;
  std::uint32_t ordinal = 0;
  for (const auto& entry : fs::directory_iterator(dir / "gen")) {
    if (entry.path().extension() != ".jsonl") continue;
    const Session session = read_session(entry.path().string());

    // record round trip over every line of the file
    std::istringstream in(slurp(entry.path()));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++lines;
      const auto rec = parse_record(line);
      if (serialize_record(rec) != line || !(parse_record(serialize_record(rec)) == rec)) ++line_bad;
    }

    // independent per-(frame, subframe) occupancy and per-frame modulation sets
    std::map<std::uint64_t, std::array<bool, 10>> occupied;
    std::map<std::uint64_t, std::array<std::set<int>, 2>> mods;
    for (const auto& r : session.records) {
      occupied[r.frame][r.subframe] = true;
      if ((r.chan == ChannelKind::PDSCH || r.chan == ChannelKind::PUSCH) && r.mod_order)
        mods[r.frame][r.dir == Direction::UL ? 1 : 0].insert(*r.mod_order);
    }

    for (const auto& m : session_matrices(session, ordinal++, schema)) {
      ++matrices;
      if (m.width != d || m.values.size() != 10 * d) {
        ++shape_bad;
        continue;
      }
      const auto occ = occupied.count(m.frame) ? occupied[m.frame] : std::array<bool, 10>{};
      for (std::size_t r = 0; r < 10; ++r) {
        if (!occ[r]) {
          ++empty_rows;
          for (std::size_t c = 0; c < base; ++c) empty_bad += m.at(r, c) != 0.0f;
        }
        for (auto c : {err_ul, err_dl}) err_bad += !(m.at(r, c) >= 0.0f && m.at(r, c) <= 1.0f);
        eff_bad += !(m.at(r, eff) >= 0.0f);
      }
      if (mods.count(m.frame)) {
        const auto& md = mods[m.frame];
        for (std::size_t k = 0; k < 2; ++k) {
          if (md[k].size() != 1) continue;
          ++const_windows;
          for (std::size_t r = 0; r < 10; ++r) mvi_bad += m.at(r, k == 0 ? mvi_dl : mvi_ul) != 0.0f;
        }
      }
    }
  }

  // parse/serialize round trip on 10,000 freshly generated lines
  std::size_t fresh = 0, fresh_bad = 0;
  for (std::uint64_t seed = 1; fresh < 10000; ++seed) {
    const auto label = static_cast<TrafficLabel>(seed % 4);
    const auto gain = GainLevel::from_index(seed % GainLevel::kCount);
    for (const auto& rec : generate_records(default_profile(label), ChannelQualityModel::for_gain(gain), 50, seed)) {
      const std::string line = serialize_record(rec);
      const auto back = parse_record(line);
      fresh_bad += !(back == rec) || serialize_record(back) != line;
      if (++fresh == 10000) break;
    }
  }

  const Dataset ds = preprocess_directory((dir / "gen").string(), schema);
  for (const auto& s : ds.samples) shape_bad += s.features.size() != 10 * d;

  Outcome o;
  o.pass = matrices > 0 && ds.steps == 10 && ds.width == d && shape_bad == 0 && empty_rows > 0 && empty_bad == 0 &&
           err_bad == 0 && eff_bad == 0 && const_windows > 0 && mvi_bad == 0 && lines > 0 && line_bad == 0 &&
           fresh == 10000 && fresh_bad == 0;
  o.detail = std::to_string(matrices) + " matrices 10x" + std::to_string(d) + ", " + std::to_string(empty_rows) +
             " empty rows (" + std::to_string(empty_bad) + " nonzero), err/eff violations " +
             std::to_string(err_bad + eff_bad) + ", " + std::to_string(const_windows) + " constant windows (" +
             std::to_string(mvi_bad) + " nonzero mvi), round trip " + std::to_string(fresh_bad) + "/" +
             std::to_string(fresh) + " + " + std::to_string(line_bad) + "/" + std::to_string(lines) +
             " file lines mismatched";
  return o;
}

// ---- 9 ---------------------------------------------------------------------

Outcome determinism() {
  auto run = [](const fs::path& dir) {
    const std::string gen = (dir / "gen").string(), data = (dir / "data.blcd").string(),
                      model = (dir / "model.bin").string(), report = (dir / "report.json").string();
    const bool ok = cli({"gen", "--out", gen, "--frames", "30", "--seed", "9"}) == 0 &&
                    cli({"preprocess", "--in", gen, "--out", data}) == 0 &&
                    cli({"train", "--data", data, "--out", model, "--epochs", "2", "--seed", "9"}) == 0 &&
                    cli({"eval", "--data", data, "--model", model, "--report", report}) == 0;
    return ok;
  };
  const auto a = work_dir("determinism_a"), b = work_dir("determinism_b");
  Outcome o;
  if (!run(a) || !run(b)) {
    o.detail = "pipeline failed";
    return o;
  }
  std::vector<std::string> files = {"data.blcd", "model.history.jsonl", "report.json", "model.bin"};
  for (const auto& e : fs::directory_iterator(a / "gen")) files.push_back("gen/" + e.path().filename().string());
  std::string differ;
  bool present = true;
  for (const auto& f : files) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    present &= !x.empty();
    if (x != y) differ += " " + f;
  }
  o.pass = present && differ.empty();
  o.detail = std::to_string(files.size()) + " files compared" + (differ.empty() ? ", all identical" : ", differ:" + differ);
  if (!present) o.detail += ", missing output";
  return o;
}

// ---- 10 --------------------------------------------------------------------

Outcome serialization() {
  const auto dir = work_dir("serialization");
  BiLCNet<float> net(BiLCNetConfig::with_input_dim(61));
  Rng rng(31);
  net.init(rng);
  // populate the batch-norm running statistics
  for (int i = 0; i < 3; ++i) net.forward(random_tensor<float>({16, 10, 61}, 40 + i), Mode::Train, rng, nullptr);
  const std::string path = (dir / "model.bin").string();
  save_model(path, net);
  LoadedModel lm = load_model(path);
  const auto x = random_tensor<float>({32, 10, 61}, 50);
  const auto a = net.infer(x), b = lm.net.infer(x);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float u = a[i], v = b[i];
    mismatched += std::memcmp(&u, &v, sizeof u) != 0;
  }
  Outcome o;
  o.pass = a.shape() == b.shape() && mismatched == 0;
  o.detail = std::to_string(a.size()) + " logits, " + std::to_string(mismatched) + " bitwise mismatches";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"macro aggregation of reference rows", reference_macro},
      {"gradient verification", gradient_verification},
      {"residual identity", residual_identity},
      {"loss sanity", loss_sanity},
      {"overfit 64 samples", overfit},
      {"synthetic multi-scenario run", multi_scenario},
      {"zero-shot harness", zero_shot},
      {"preprocessing invariants", preprocessing_invariants},
      {"determinism", determinism},
      {"serialization", serialization},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
