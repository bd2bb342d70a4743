#include "pheno/config_io.hpp"

#include "pheno/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace pheno {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  /// Rejects keys that were never read.
  void finish(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : j_.items())
      if (!allowed.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  Section sub(const char* key) const { return Section(j_.at(key), where_ + "." + key); }
  const json& raw(const char* key) const { return j_.at(key); }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
};

json parse(const std::string& text, const std::string& where, const char* kind) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(where + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  if (!j.contains("schema_version") || j.at("schema_version") != kConfigSchemaVersion)
    throw ConfigError(where + ": schema_version must be " + std::to_string(kConfigSchemaVersion));
  if (!j.contains("kind") || j.at("kind") != kind)
    throw ConfigError(where + ": kind must be \"" + std::string(kind) + "\"");
  return j;
}

AdversarialWeights adversarial_from(const Section& s) {
  AdversarialWeights a;
  s.get("well", a.well);
  s.get("plate", a.plate);
  s.get("batch", a.batch);
  s.get("source", a.source);
  s.finish({"well", "plate", "batch", "source"});
  return a;
}

template <typename T, typename F>
std::vector<T> names(const Section& s, const char* key, F convert) {
  std::vector<std::string> raw;
  s.get(key, raw);
  std::vector<T> out;
  for (const auto& r : raw) out.push_back(convert(r));
  return out;
}

}  // namespace

SynthConfig parse_synth_config(const std::string& text, const std::string& where) {
  const json j = parse(text, where, "synth");
  const Section root(j, where);
  root.finish({"schema_version", "kind", "universe", "split"});
  SynthConfig c;
  if (root.has("universe")) {
    const Section u = root.sub("universe");
    auto& x = c.universe;
    u.get("n_targets", x.n_targets);
    u.get("n_moas", x.n_moas);
    u.get("n_compounds", x.n_compounds);
    u.get("n_crispr", x.n_crispr);
    u.get("d_latent", x.d_latent);
    u.get("d_feat", x.d_feat);
    u.get("target_scale", x.target_scale);
    u.get("offset_scale", x.offset_scale);
    u.get("potency_min", x.potency_min);
    u.get("potency_max", x.potency_max);
    u.get("cell_noise", x.cell_noise);
    u.get("activators", x.activators);
    u.get("control_scale", x.control_scale);
    u.finish({"n_targets", "n_moas", "n_compounds", "n_crispr", "d_latent", "d_feat", "target_scale", "offset_scale",
              "potency_min", "potency_max", "cell_noise", "control_scale", "activators"});
  }
  if (root.has("split")) {
    const Section s = root.sub("split");
    auto& x = c.split;
    s.get("n_arena_compounds", x.n_arena_compounds);
    s.get("replicates", x.replicates);
    s.get("holdout_replicates", x.holdout_replicates);
    s.get("crispr_replicates", x.crispr_replicates);
    s.get("n_plates", x.n_plates);
    s.get("n_batches", x.n_batches);
    s.get("n_sources", x.n_sources);
    s.get("control_fraction", x.control_fraction);
    s.get("cells_per_well", x.cells_per_well);
    s.get("plate_cols", x.plate_cols);
    s.get("plate_offset_sd", x.plate_offset_sd);
    s.get("batch_offset_sd", x.batch_offset_sd);
    s.get("source_log_gain_sd", x.source_log_gain_sd);
    s.get("well_gradient_sd", x.well_gradient_sd);
    s.finish({"n_arena_compounds", "replicates", "holdout_replicates", "crispr_replicates", "n_plates", "n_batches",
              "n_sources", "control_fraction", "cells_per_well", "plate_cols", "plate_offset_sd", "batch_offset_sd",
              "source_log_gain_sd", "well_gradient_sd"});
  }
  return c;
}

SynthConfig load_synth_config(const std::string& path) { return parse_synth_config(read_file(path), path); }

ZooConfig parse_zoo_config(const std::string& text, const std::string& where) {
  const json j = parse(text, where, "zoo");
  const Section root(j, where);
  root.finish({"schema_version", "kind", "grid", "train"});
  ZooConfig c;
  if (root.has("grid")) {
    const Section g = root.sub("grid");
    auto& a = c.axes;
    g.get("depths", a.depths);
    g.get("widths", a.widths);
    g.get("ood_counts", a.ood_counts);
    if (g.has("ood_fractions")) {
      if (g.has("ood_counts")) throw ConfigError(where + ".grid: give ood_counts or ood_fractions, not both");
      std::vector<double> f;
      g.get("ood_fractions", f);
      c.ood_fractions = f;
    }
    g.get("replicate_fractions", a.replicate_fractions);
    if (g.has("supervisions")) a.supervisions = names<Supervision>(g, "supervisions", supervision_from_string);
    if (g.has("tasks")) a.tasks = names<Task>(g, "tasks", task_from_string);
    g.get("seeds", a.seeds);
    if (g.has("adversarial")) a.adversarial = adversarial_from(g.sub("adversarial"));
    if (g.has("exclude")) {
      const json& list = g.raw("exclude");
      if (!list.is_array()) throw ConfigError(where + ".grid.exclude: expected an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const Section e(list[i], where + ".grid.exclude[" + std::to_string(i) + "]");
        GridExclusion x;
        if (e.has("supervision")) {
          std::string s;
          e.get("supervision", s);
          x.supervision = supervision_from_string(s);
        }
        if (e.has("task")) {
          std::string s;
          e.get("task", s);
          x.task = task_from_string(s);
        }
        int v = 0;
        double d = 0;
        if (e.has("depth")) e.get("depth", v), x.depth = v;
        if (e.has("width")) e.get("width", v), x.width = v;
        if (e.has("ood_count")) e.get("ood_count", v), x.ood_count = v;
        if (e.has("replicate_fraction")) e.get("replicate_fraction", d), x.replicate_fraction = d;
        e.finish({"supervision", "task", "depth", "width", "ood_count", "replicate_fraction"});
        a.exclusions.push_back(x);
      }
    }
    g.finish({"depths", "widths", "ood_counts", "ood_fractions", "replicate_fractions", "supervisions", "tasks",
              "seeds", "adversarial", "exclude"});
    if (a.depths.empty() || a.widths.empty() || a.replicate_fractions.empty() || a.supervisions.empty() ||
        a.tasks.empty() || a.seeds.empty() || (a.ood_counts.empty() && !c.ood_fractions))
      throw ConfigError(where + ".grid: every axis needs at least one value");
  }
  if (root.has("train")) {
    const Section t = root.sub("train");
    auto& x = c.train;
    t.get("lr", x.lr);
    t.get("batch_size", x.batch_size);
    t.get("patience", x.patience);
    t.get("max_epochs", x.max_epochs);
    t.get("weight_decay", x.weight_decay);
    t.get("adversary_steps", x.adversary_steps);
    t.finish({"lr", "batch_size", "patience", "max_epochs", "weight_decay", "adversary_steps"});
    x.validate();
  }
  return c;
}

ZooConfig load_zoo_config(const std::string& path) { return parse_zoo_config(read_file(path), path); }

GridAxes resolve_axes(const ZooConfig& cfg, int ood_pool_size) {
  GridAxes a = cfg.axes;
  if (cfg.ood_fractions) a.ood_counts = ood_counts_for(ood_pool_size, *cfg.ood_fractions);
  for (int c : a.ood_counts)
    if (c < 0 || c > ood_pool_size)
      throw ConfigError("OOD count " + std::to_string(c) + " outside the pool of " + std::to_string(ood_pool_size));
  return a;
}

}  // namespace pheno
