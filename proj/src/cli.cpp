// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bilcnet/error.hpp"
#include "bilcnet/eval.hpp"
#include "bilcnet/grad_check.hpp"
#include "bilcnet/model.hpp"
#include "bilcnet/preprocess.hpp"
#include "bilcnet/run_config.hpp"
#include "bilcnet/synth_gen.hpp"
#include "bilcnet/train.hpp"

namespace bilcnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  return fs::path(path).replace_extension(suffix).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Options {
  std::string out, in, data, model, report, config;
  std::uint64_t frames = 200;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::size_t window = kDefaultWindow;
  bool window_given = false;
  std::size_t epochs = 0;
  double tol = 1e-5;
  double tol_f32 = 1e-3;
  std::size_t seeds = 1;
  bool f32 = false;
  bool inject_flip = false;
};

RunConfig effective_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.epochs > 0) rc.train.max_epochs = o.epochs;
  if (o.seed_given) rc.train.seed = o.seed;
  if (o.window_given) rc.window = o.window;
  rc.validate();
  return rc;
}

nlohmann::ordered_json stats_meta(const NormStats& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["sigma"] = s.sigma;
  return j;
}

// ---- commands -----------------------------------------------------------------

int cmd_gen(const Options& o, std::ostream& out) {
  const Manifest m = generate_dataset(o.out, o.frames, o.seed);
  out << (fs::path(o.out) / kManifestName).string() << "\n";
  out << m.sessions.size() << " sessions\n";
  return kExitOk;
}

int cmd_preprocess(const Options& o, std::ostream& out) {
  const FeatureSchema schema = FeatureSchema::default_v1();
  const Dataset data = preprocess_directory(o.in, schema, o.window);
  write_dataset(o.out, data);
  const Splits s = temporal_split(data, 0.8);
  write_text(sibling(o.out, ".stats.json"), stats_to_json(normalize_dataset(data, s.train), schema).dump(2) + "\n");
  out << data.samples.size() << " samples, T=" << data.steps << ", D=" << data.width << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig rc = effective_config(o);
  rc.paths.data = o.data;
  rc.paths.model = o.out;
  Dataset data = read_dataset(o.data);
  rc.model.bilstm.input_dim = data.width;
  rc.validate();

  const Splits s = temporal_split(data, rc.train_frac);
  const NormStats stats = normalize_dataset(data, s.train);
  stats.apply(data);

  BiLCNet<float> net(rc.model);
  Rng init_rng(splitmix64(rc.train.seed));
  net.init(init_rng);
  std::ofstream history(sibling(o.out, ".history.jsonl"), std::ios::binary | std::ios::trunc);
  if (!history) fail(ErrorCode::IoFailure, "cannot write history next to " + o.out);
  const FitResult fr = fit(net, DataView{&data, s.train}, DataView{&data, s.val}, rc.train,
                           [&](const EpochRecord& r) { history << history_line(r) << "\n" << std::flush; });
  if (!history) fail(ErrorCode::IoFailure, "history write failed");

  nlohmann::ordered_json meta;
  meta["norm"] = stats_meta(stats);
  meta["train_frac"] = rc.train_frac;
  meta["window"] = data.steps;
  meta["seed"] = rc.train.seed;
  meta["best_epoch"] = fr.best_epoch;
  save_model(o.out, net, {}, json(meta));
  write_text(sibling(o.out, ".run.json"), to_json(rc).dump(2) + "\n");

  const EvalResult v = evaluate(net, DataView{&data, s.val});
  const MetricsReport m = metrics(confusion(v.labels, v.predictions));
  out << "best epoch " << fr.best_epoch << " of " << fr.history.size() << "\n";
  out << "val accuracy " << fmt("%.4f", m.accuracy) << "  macro P " << fmt("%.4f", m.macro.precision) << "  R "
      << fmt("%.4f", m.macro.recall) << "  F1 " << fmt("%.4f", m.macro.f1) << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  LoadedModel lm = load_model(o.model);
  Dataset data = read_dataset(o.data);
  const std::size_t d = lm.net.config().bilstm.input_dim;
  if (data.width != d) {
    fail(ErrorCode::SchemaMismatch, "dataset has D=" + std::to_string(data.width) + ", model expects D=" + std::to_string(d));
  }
  NormStats stats;
  double train_frac = 0.8;
  try {
    stats.mean = lm.meta.at("norm").at("mean").get<std::vector<double>>();
    stats.sigma = lm.meta.at("norm").at("sigma").get<std::vector<double>>();
    train_frac = lm.meta.at("train_frac").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::VersionMismatch, o.model + " lacks normalization metadata: " + e.what());
  }
  if (stats.mean.size() != d || stats.sigma.size() != d) {
    fail(ErrorCode::SchemaMismatch, "normalization statistics do not match D=" + std::to_string(d));
  }
  stats.apply(data);
  const Splits s = temporal_split(data, train_frac);
  const EvalResult r = evaluate(lm.net, DataView{&data, s.test});
  const ConfusionMatrix cm = confusion(r.labels, r.predictions);
  const MetricsReport m = metrics(cm);
  write_text(o.report, report_to_json(cm, m).dump(2) + "\n");
  out << "accuracy " << fmt("%.4f", m.accuracy) << "  macro P " << fmt("%.4f", m.macro.precision) << "  R "
      << fmt("%.4f", m.macro.recall) << "  F1 " << fmt("%.4f", m.macro.f1) << "\n";
  return kExitOk;
}

int cmd_zeroshot(const Options& o, std::ostream& out) {
  RunConfig rc = effective_config(o);
  rc.paths.data = o.data;
  rc.paths.report = o.report;
  const Dataset data = read_dataset(o.data);
  rc.model.bilstm.input_dim = data.width;
  rc.validate();

  const auto folds = zero_shot_folds(data);
  std::vector<std::size_t> covered(data.samples.size(), 0);
  std::vector<std::pair<GainLevel, double>> accs;
  for (const auto& f : folds) {
    const std::size_t g = f.held_out.index();
    auto [train, val] = carve_validation(data, f.train, rc.zeroshot_val_frac);
    for (std::size_t i : train) {
      if (data.samples[i].gain_index == g) fail(ErrorCode::InvariantViolation, "held-out gain in training set");
    }
    for (std::size_t i : val) {
      if (data.samples[i].gain_index == g) fail(ErrorCode::InvariantViolation, "held-out gain in validation set");
    }
    for (std::size_t i : f.test) ++covered[i];

    Dataset fold = data;
    normalize_dataset(fold, train).apply(fold);
    TrainConfig tc = rc.train;
    tc.seed = splitmix64(rc.train.seed ^ (static_cast<std::uint64_t>(f.held_out.db()) << 32));
    BiLCNet<float> net(rc.model);
    Rng init_rng(splitmix64(tc.seed));
    net.init(init_rng);
    fit(net, DataView{&fold, train}, DataView{&fold, val}, tc);
    const double acc = evaluate(net, DataView{&fold, f.test}).accuracy;
    accs.emplace_back(f.held_out, acc);
    out << "fold " << f.held_out.db() << " dB: accuracy " << fmt("%.4f", acc) << "\n" << std::flush;
  }
  for (std::size_t c : covered) {
    if (c != 1) fail(ErrorCode::InvariantViolation, "test sets do not partition the dataset");
  }
  const ZeroShotReport rep = zero_shot_report(accs);
  write_text(o.report, to_json(rep).dump(2) + "\n");
  write_text(sibling(o.report, ".run.json"), to_json(rc).dump(2) + "\n");
  out << "mean accuracy " << fmt("%.4f", rep.mean) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  GradCheckOptions g;
  g.seed = o.seed_given ? o.seed : 0;
  g.seeds = o.seeds;
  g.tol_f64 = o.tol;
  g.tol_f32 = o.tol_f32;
  g.include_f32 = o.f32;
  g.flip_sign = o.inject_flip;
  bool ok = true;
  char line[160];
  for (const auto& r : run_grad_check_suite(g)) {
    std::snprintf(line, sizeof line, "%-16s %s  %.3e  tol %.0e  %s  %s\n", r.name.c_str(), r.precision.c_str(),
                  r.max_rel_err, r.tol, r.pass ? "ok  " : "FAIL", r.worst_var.c_str());
    out << line;
    ok = ok && r.pass;
  }
  return ok ? kExitOk : kExitVerification;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"BiLCNet traffic classifier", "bilcnet"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "Generate synthetic session logs");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--frames", o.frames, "Frames per session")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Root seed");

  auto* pre = app.add_subcommand("preprocess", "Build a dataset from session logs");
  pre->add_option("--in", o.in, "Session directory")->required();
  pre->add_option("--out", o.out, "Dataset file")->required();
  pre->add_option("--window", o.window, "Frames per sample")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train on the temporal split");
  train->add_option("--data", o.data, "Dataset file")->required();
  train->add_option("--config", o.config, "Run config JSON");
  train->add_option("--out", o.out, "Model file")->required();
  train->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train->add_option("--seed", o.seed, "Training seed");

  auto* ev = app.add_subcommand("eval", "Evaluate a model on the test split");
  ev->add_option("--data", o.data, "Dataset file")->required();
  ev->add_option("--model", o.model, "Model file")->required();
  ev->add_option("--report", o.report, "Report JSON")->required();

  auto* zs = app.add_subcommand("zeroshot", "Leave-one-gain-out evaluation");
  zs->add_option("--data", o.data, "Dataset file")->required();
  zs->add_option("--config", o.config, "Run config JSON");
  zs->add_option("--report", o.report, "Report JSON")->required();
  zs->add_option("--epochs", o.epochs, "Maximum epochs per fold")->check(CLI::PositiveNumber);
  zs->add_option("--seed", o.seed, "Root seed");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--tol", o.tol, "f64 tolerance");
  gc->add_option("--tol-f32", o.tol_f32, "f32 tolerance");
  gc->add_option("--seed", o.seed, "First seed");
  gc->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  gc->add_flag("--f32", o.f32, "Also check the f32 path");
  gc->add_flag("--inject-sign-flip", o.inject_flip)->group("");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("bilcnet");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  for (auto* sub : {train, zs, gc}) {
    if (sub->parsed() && sub->count("--seed")) o.seed_given = true;
  }
  o.window_given = pre->parsed() && pre->count("--window");

  try {
    if (gen->parsed()) return cmd_gen(o, out);
    if (pre->parsed()) return cmd_preprocess(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (zs->parsed()) return cmd_zeroshot(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace bilcnet
