// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "bilcnet/cli.hpp"
#include "bilcnet/error.hpp"
#include "bilcnet/preprocess.hpp"
#include "bilcnet/run_config.hpp"
#include "support.hpp"

using namespace bilcnet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string small_config(const fs::path& dir) {
  const auto path = (dir / "small.json").string();
  std::ofstream(path) << R"({"model":{"bilstm":{"hidden_dim":8,"num_layers":1},
    "conformer":{"num_blocks":1,"num_heads":2},"classifier_hidden":16},
    "train":{"batch_size":32,"max_epochs":3}})";
  return path;
}

}  // namespace

TEST_CASE("run config") {
  const RunConfig d = run_config_from_json(nlohmann::json::object());
  CHECK(d.train.batch_size == 64);
  CHECK(d.window == 10);
  CHECK(d.train_frac == 0.8);
  const RunConfig r = run_config_from_json(nlohmann::json::parse(to_json(d).dump()));
  CHECK(to_json(r).dump() == to_json(d).dump());
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"extra", 1}}), Error);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"split", {{"train_frac", 1.5}}}}), Error);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"schema", {{"version", 2}}}}), Error);
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code == kExitUsage);
  const Run r = cli({"gen"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--out") != std::string::npos);
  CHECK(cli({"train", "--data", "x"}).code == kExitUsage);
  CHECK(cli({"gradcheck", "--bogus"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("gen, preprocess, train and eval") {
  const auto dir = testing::scratch_dir("cli");
  const auto d = (dir / "d").string(), blcd = (dir / "ds.blcd").string(), model = (dir / "m.blcm").string();
  REQUIRE(cli({"gen", "--out", d, "--frames", "12", "--seed", "5"}).code == kExitOk);
  const std::string manifest = testing::slurp(fs::path(d) / "manifest.json");
  REQUIRE(cli({"gen", "--out", d, "--frames", "12", "--seed", "5"}).code == kExitOk);
  CHECK(testing::slurp(fs::path(d) / "manifest.json") == manifest);

  const Run p = cli({"preprocess", "--in", d, "--out", blcd});
  REQUIRE(p.code == kExitOk);
  CHECK(p.out.find("528 samples, T=10, D=61") != std::string::npos);
  const std::string bytes = testing::slurp(blcd);
  REQUIRE(cli({"preprocess", "--in", d, "--out", blcd}).code == kExitOk);
  CHECK(testing::slurp(blcd) == bytes);
  const auto stats = nlohmann::json::parse(testing::slurp(dir / "ds.stats.json"));
  CHECK(stats.at("mean").size() == 61);

  const auto cfg = small_config(dir);
  REQUIRE(cli({"train", "--data", blcd, "--config", cfg, "--out", model, "--epochs", "1"}).code == kExitOk);
  const std::string history = testing::slurp(dir / "m.history.jsonl");
  CHECK(std::count(history.begin(), history.end(), '\n') == 1);
  const auto run = nlohmann::json::parse(testing::slurp(dir / "m.run.json"));
  CHECK(run.at("train").at("max_epochs") == 1);
  CHECK(run.at("model").at("bilstm").at("input_dim") == 61);

  REQUIRE(cli({"train", "--data", blcd, "--config", cfg, "--out", model}).code == kExitOk);
  const std::string h3 = testing::slurp(dir / "m.history.jsonl");
  CHECK(std::count(h3.begin(), h3.end(), '\n') <= 3);
  REQUIRE(cli({"train", "--data", blcd, "--config", cfg, "--out", model}).code == kExitOk);
  CHECK(testing::slurp(dir / "m.history.jsonl") == h3);

  const auto report = (dir / "r.json").string();
  const Run e = cli({"eval", "--data", blcd, "--model", model, "--report", report});
  REQUIRE(e.code == kExitOk);
  CHECK(e.out.find("accuracy") != std::string::npos);
  const auto j = nlohmann::json::parse(testing::slurp(report));
  REQUIRE(j.at("per_class").size() == 4);
  CHECK(j.at("overall").size() == 4);
  double p_sum = 0, r_sum = 0, f_sum = 0;
  for (const auto& c : j.at("per_class")) {
    p_sum += c.at("precision").get<double>();
    r_sum += c.at("recall").get<double>();
    f_sum += c.at("f1").get<double>();
  }
  CHECK(j.at("overall").at("macro_precision").get<double>() == doctest::Approx(p_sum / 4).epsilon(1e-12));
  CHECK(j.at("overall").at("macro_recall").get<double>() == doctest::Approx(r_sum / 4).epsilon(1e-12));
  CHECK(j.at("overall").at("macro_f1").get<double>() == doctest::Approx(f_sum / 4).epsilon(1e-12));

  CHECK(cli({"eval", "--data", blcd, "--model", (dir / "missing.blcm").string(), "--report", report}).code ==
        kExitRuntime);

  // A dataset with another width is refused.
  Dataset narrow = read_dataset(blcd);
  narrow.width = 60;
  for (auto& s : narrow.samples) s.features.resize(600);
  const auto narrow_path = (dir / "narrow.blcd").string();
  write_dataset(narrow_path, narrow);
  CHECK(cli({"eval", "--data", narrow_path, "--model", model, "--report", report}).code == kExitRuntime);
}

TEST_CASE("corrupt session line is reported with file and line") {
  const auto dir = testing::scratch_dir("cli_corrupt");
  const auto d = (dir / "d").string();
  REQUIRE(cli({"gen", "--out", d, "--frames", "5"}).code == kExitOk);
  const auto victim = fs::path(d) / "meeting_70.jsonl";
  std::string content = testing::slurp(victim);
  const auto second = content.find('\n', content.find('\n') + 1);
  content.insert(second + 1, "{\"type\":\"rec\",\"frame\":\n");
  std::ofstream(victim, std::ios::binary | std::ios::trunc) << content;
  const Run r = cli({"preprocess", "--in", d, "--out", (dir / "x.blcd").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("meeting_70.jsonl:3") != std::string::npos);
}

TEST_CASE("zeroshot refuses a dataset missing a gain") {
  const auto dir = testing::scratch_dir("cli_zs");
  Dataset d;
  d.width = 2;
  for (std::uint8_t g = 0; g < 10; ++g) {
    for (std::uint32_t f = 0; f < 3; ++f) d.samples.push_back(Sample{0, g, g, f, std::vector<float>(20, 0.0f)});
  }
  const auto path = (dir / "d.blcd").string();
  write_dataset(path, d);
  const Run r = cli({"zeroshot", "--data", path, "--report", (dir / "z.json").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("84 dB") != std::string::npos);
}

TEST_CASE("gradcheck exit codes") {
  const Run ok = cli({"gradcheck"});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("bilcnet") != std::string::npos);
  CHECK(cli({"gradcheck", "--seed", "4"}).code == kExitOk);
  CHECK(cli({"gradcheck", "--inject-sign-flip"}).code == kExitVerification);
}
