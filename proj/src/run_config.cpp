// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "bilcnet/error.hpp"

namespace bilcnet {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      fail(ErrorCode::InvalidConfig, "unknown key " + (where.empty() ? "" : where + ".") + it.key());
    }
  }
}

template <typename V>
void read_if(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<V>();
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidConfig, std::string(key) + ": " + e.what());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (schema_version != 1) fail(ErrorCode::InvalidConfig, "only schema version 1 is defined");
  if (window == 0) fail(ErrorCode::InvalidConfig, "window must be >= 1");
  if (!(train_frac > 0 && train_frac < 1)) fail(ErrorCode::InvalidConfig, "train_frac must be in (0,1)");
  if (!(zeroshot_val_frac > 0 && zeroshot_val_frac < 1)) {
    fail(ErrorCode::InvalidConfig, "zeroshot_val_frac must be in (0,1)");
  }
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"model", "train", "schema", "split", "paths"}, "");
  if (auto it = j.find("model"); it != j.end()) c.model = config_from_json(*it);
  if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
  if (auto it = j.find("schema"); it != j.end()) {
    reject_unknown(*it, {"version", "window"}, "schema");
    read_if(*it, "version", c.schema_version);
    read_if(*it, "window", c.window);
  }
  if (auto it = j.find("split"); it != j.end()) {
    reject_unknown(*it, {"train_frac", "zeroshot_val_frac"}, "split");
    read_if(*it, "train_frac", c.train_frac);
    read_if(*it, "zeroshot_val_frac", c.zeroshot_val_frac);
  }
  if (auto it = j.find("paths"); it != j.end()) {
    reject_unknown(*it, {"data", "model", "report"}, "paths");
    read_if(*it, "data", c.paths.data);
    read_if(*it, "model", c.paths.model);
    read_if(*it, "report", c.paths.report);
  }
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["schema"] = {{"version", c.schema_version}, {"window", c.window}};
  j["split"] = {{"train_frac", c.train_frac}, {"zeroshot_val_frac", c.zeroshot_val_frac}};
  j["paths"] = {{"data", c.paths.data}, {"model", c.paths.model}, {"report", c.paths.report}};
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace bilcnet
