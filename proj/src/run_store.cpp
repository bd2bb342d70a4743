#include "pheno/run_store.hpp"

#include "pheno/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace pheno {

using nlohmann::json;

namespace {

json config_json(const RunConfig& c) {
  return {{"supervision", to_string(c.supervision)},
          {"task", to_string(c.task)},
          {"depth", c.depth},
          {"width", c.width},
          {"ood_count", c.ood_count},
          {"replicate_fraction", c.replicate_fraction},
          {"adversarial",
           {{"well", c.adversarial.well},
            {"plate", c.adversarial.plate},
            {"batch", c.adversarial.batch},
            {"source", c.adversarial.source}}},
          {"seed", c.seed}};
}

RunConfig config_from(const json& j) {
  RunConfig c;
  c.supervision = supervision_from_string(j.at("supervision").get<std::string>());
  c.task = task_from_string(j.at("task").get<std::string>());
  c.depth = j.at("depth").get<int>();
  c.width = j.at("width").get<int>();
  c.ood_count = j.at("ood_count").get<int>();
  c.replicate_fraction = j.at("replicate_fraction").get<double>();
  const auto& a = j.at("adversarial");
  c.adversarial = {a.at("well").get<double>(), a.at("plate").get<double>(), a.at("batch").get<double>(),
                   a.at("source").get<double>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

double number_or_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

std::string record_to_json_line(const RunRecord& r) {
  json metrics = json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  json j = {{"schema_version", kStoreSchemaVersion},
            {"kind", "run_record"},
            {"fingerprint", r.fingerprint},
            {"config", config_json(r.config)},
            {"status", to_string(r.status)},
            {"metrics", std::move(metrics)},
            {"epochs", r.epochs},
            {"best_epoch", r.best_epoch},
            {"best_validation", r.best_validation},
            {"wall_time", r.wall_time},
            {"cause", r.cause}};
  return j.dump();
}

RunRecord record_from_json_line(const std::string& line, const std::string& where) {
  try {
    const json j = json::parse(line);
    if (!j.contains("schema_version") || j.at("schema_version") != kStoreSchemaVersion)
      throw StoreError(where + ": unsupported run record schema version");
    if (j.at("kind") != "run_record") throw StoreError(where + ": not a run record");
    RunRecord r;
    r.config = config_from(j.at("config"));
    r.fingerprint = j.at("fingerprint").get<std::string>();
    if (r.fingerprint != fingerprint(r.config)) throw StoreError(where + ": fingerprint does not match config");
    r.status = run_status_from_string(j.at("status").get<std::string>());
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = number_or_nan(v);
    r.epochs = j.at("epochs").get<int>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_validation = number_or_nan(j.at("best_validation"));
    r.wall_time = j.at("wall_time").get<double>();
    r.cause = j.at("cause").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw StoreError(where + ": malformed run record: " + e.what());
  } catch (const ConfigError& e) {
    throw StoreError(where + ": " + e.what());
  }
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(record_from_json_line(line, path + ":" + std::to_string(lineno)));
  }
  return out;
}

RunStore::RunStore(std::string path, bool reset) : path_(std::move(path)) {
  namespace fs = std::filesystem;
  const fs::path p(path_);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  try {
    records_ = load_records(path_);
  } catch (const StoreError&) {
    if (!reset) throw;
    fs::rename(p, fs::path(path_ + ".corrupt"));
    records_.clear();
  }
  for (const auto& r : records_) fingerprints_.insert(r.fingerprint);
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw StoreError("cannot open run store " + path_ + " for appending");
}

bool RunStore::contains(const std::string& fp) const { return fingerprints_.count(fp) > 0; }

void RunStore::append(const RunRecord& r) {
  const std::string line = record_to_json_line(r) + "\n";
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw StoreError("failed to append to run store " + path_);
  records_.push_back(r);
  fingerprints_.insert(r.fingerprint);
}

}  // namespace pheno
