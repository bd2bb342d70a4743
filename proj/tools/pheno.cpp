// pheno: synthetic arena synthesis, preprocessing, model zoo execution,
// evaluation, scaling analysis and report emission.

#include "pheno/config_io.hpp"
#include "pheno/dataset_io.hpp"
#include "pheno/errors.hpp"
#include "pheno/pheno_eval.hpp"
#include "pheno/profile_prep.hpp"
#include "pheno/report.hpp"
#include "pheno/run_store.hpp"
#include "pheno/scaling_laws.hpp"
#include "pheno/zoo_runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace pheno;

namespace {

constexpr const char* kStoreEnv = "PHENO_STORE_DIR";
constexpr const char* kStoreFile = "runs.jsonl";

std::string store_file(const std::string& flag) {
  std::string dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv(kStoreEnv);
    if (!env || !*env) throw ConfigError(std::string("no run store: pass --store or set ") + kStoreEnv);
    dir = env;
  }
  return (fs::path(dir) / kStoreFile).string();
}

void print_table(const Table& t) {
  std::cout << "# " << t.name << "\n" << render_table(t) << "\n";
}

struct Options {
  std::string config, store, dataset, in, out, task = "moa";
  std::optional<std::uint64_t> seed;
  int parallelism = 1;
  int d_out = 0;
  int max_runs = -1;
  int replicates = 5;
  bool reset = false;
  bool skip_plate_norm = false;
  std::optional<double> target_accuracy;
  std::optional<double> current;
};

int cmd_synth(const Options& o) {
  const SynthConfig cfg = o.config.empty() ? SynthConfig{} : load_synth_config(o.config);
  const std::uint64_t seed = o.seed.value_or(0);
  const Universe u = generate_universe(cfg.universe, seed);
  const ArenaDataset d = assemble_dataset(u, cfg.split, seed);
  write_dataset(d, o.out);
  std::cout << "wrote " << d.size() << " wells (" << d.arena_compounds.size() << " arena compounds, "
            << d.ood_pool.size() << " OOD) to " << o.out << "\n";
  return 0;
}

int cmd_prep(const Options& o) {
  ArenaDataset d = read_dataset(o.in);
  const int d_out = o.d_out > 0 ? o.d_out : d.d_feat;
  const Whitener w = o.skip_plate_norm ? whiten_dataset(d, d_out) : preprocess_dataset(d, d_out);
  write_dataset(d, o.out);
  save_whitener(w, (fs::path(o.out) / "whitener.json").string());
  std::cout << "preprocessed " << d.size() << " wells to " << d.d_feat << " dimensions in " << o.out << "\n";
  return 0;
}

int cmd_zoo(const Options& o) {
  const ZooConfig cfg = o.config.empty() ? ZooConfig{} : load_zoo_config(o.config);
  auto data = std::make_shared<const ArenaDataset>(read_dataset(o.dataset));
  GridAxes axes = resolve_axes(cfg, static_cast<int>(data->ood_pool.size()));
  if (o.seed) axes.seeds = {*o.seed};
  const auto grid = build_grid(axes);
  ZooOptions zo;
  zo.parallelism = o.parallelism;
  zo.reset = o.reset;
  zo.max_runs = o.max_runs;
  zo.on_record = [](const RunRecord& r) {
    std::cerr << r.fingerprint << " " << to_string(r.status) << " " << canonical_string(r.config)
              << (r.cause.empty() ? "" : " cause: " + r.cause) << "\n";
  };
  const auto done = run_zoo(grid, data, cfg.train, store_file(o.store), zo);
  int failed = 0;
  for (const auto& r : done) failed += r.status == RunStatus::failed;
  std::cout << "grid " << grid.size() << ", executed " << done.size() << ", failed " << failed << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const auto records = load_records(store_file(o.store));
  std::unique_ptr<ArenaDataset> data;
  if (!o.dataset.empty()) data = std::make_unique<ArenaDataset>(read_dataset(o.dataset));
  const ReportBundle b = build_report(records, data.get());
  for (const auto& t : b.tables)
    if (t.name == "bests" || t.name == "chance" || t.name == "ttests") print_table(t);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_scale(const Options& o) {
  const Task task = task_from_string(o.task);
  const auto records = select_records(load_records(store_file(o.store)), Supervision::ibp, task);
  FrontierOptions fo;
  std::string units = "percent";
  if (task == Task::molecule) {
    fo.metric = "cce";
    fo.objective = Objective::minimize;
    units = "nats";
  } else if (task == Task::discovery) {
    fo.metric = "auc";
    units = "auc";
  }
  auto pts = frontier(records, fo);
  if (units == "percent") pts = to_percent(std::move(pts));
  Table ft{"frontier", {"ood_count", "value", "provenance"}, {}};
  for (const auto& p : pts) ft.rows.push_back({format_double(p.x), format_double(p.y), p.provenance});
  print_table(ft);
  if (pts.size() < 2) {
    std::cerr << "warning: fewer than 2 frontier points; no fit\n";
    return 0;
  }
  const ScalingFit fit = fit_linear(pts, units, std::string("ibp/") + to_string(task));
  Table st{"fit", {"slope", "intercept", "r_squared", "n_points", "x_units", "y_units"},
           {{format_double(fit.slope), format_double(fit.intercept), format_double(fit.r_squared),
             std::to_string(fit.n_points), fit.x_units, fit.y_units}}};
  print_table(st);
  if (o.target_accuracy) {
    double current = pts.front().y;
    for (const auto& p : pts)
      current = fo.objective == Objective::maximize ? std::max(current, p.y) : std::min(current, p.y);
    if (o.current) current = *o.current;
    const Extrapolation e = extrapolate(fit, current, *o.target_accuracy, o.replicates);
    Table et{"extrapolation", {"current", "target", "additional_molecules", "replicates", "additional_wells"},
             {{format_double(current), format_double(*o.target_accuracy), format_double(e.molecules),
               std::to_string(e.replicates), format_double(e.wells)}}};
    print_table(et);
  }
  const ReplicateEffect re = replicate_effect(records, fo, units);
  Table rt{"replicate_effect", {"replicate_fraction", "slope", "intercept", "r_squared", "n_points"}, {}};
  for (const auto& [frac, f] : re.fits)
    rt.rows.push_back({format_double(frac), format_double(f.slope), format_double(f.intercept),
                       format_double(f.r_squared), std::to_string(f.n_points)});
  print_table(rt);
  std::cout << "slopes nondecreasing in replicate fraction: "
            << (re.slopes_nondecreasing ? (*re.slopes_nondecreasing ? "yes" : "no") : "undefined") << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  const auto records = load_records(store_file(o.store));
  std::unique_ptr<ArenaDataset> data;
  if (!o.dataset.empty()) data = std::make_unique<ArenaDataset>(read_dataset(o.dataset));
  const ReportBundle b = build_report(records, data.get());
  write_report(b, o.out);
  for (const auto& w : b.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << b.tables.size() << " tables and " << b.plots.size() << " plots to " << o.out << "\n";
  return 0;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::training: return "training";
    case ErrorKind::store: return "store";
  }
  return "unknown";
}

int report_error(const char* kind, int code, const std::string& message) {
  nlohmann::json j = {{"error", {{"kind", kind}, {"code", code}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phenotypic screening model workbench"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic arena dataset");
  synth->add_option("--config", o.config, "Synthesis config (JSON)");
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--out", o.out, "Output dataset directory")->required();

  auto* prep = app.add_subcommand("prep", "Plate-normalize and whiten a dataset");
  prep->add_option("--in", o.in, "Input dataset directory")->required();
  prep->add_option("--out", o.out, "Output dataset directory")->required();
  prep->add_option("--d-out", o.d_out, "Whitened dimensionality (default: input dimensionality)");
  prep->add_flag("--skip-plate-norm", o.skip_plate_norm, "Whiten without plate normalization");

  auto* zoo = app.add_subcommand("zoo", "Run the experiment grid into the run store");
  zoo->add_option("--dataset", o.dataset, "Preprocessed dataset directory")->required();
  zoo->add_option("--config", o.config, "Grid config (JSON)");
  zoo->add_option("--store", o.store, std::string("Run store directory (default $") + kStoreEnv + ")");
  zoo->add_option("--parallelism", o.parallelism, "Concurrent runs");
  zoo->add_option("--seed", o.seed, "Replaces the grid's seed axis");
  zoo->add_option("--max-runs", o.max_runs, "Stop after starting this many runs");
  zoo->add_flag("--reset", o.reset, "Move a corrupt store aside and start fresh");

  auto* eval = app.add_subcommand("eval", "Per-task bests, chance baselines and regime t-tests");
  eval->add_option("--store", o.store, "Run store directory");
  eval->add_option("--dataset", o.dataset, "Dataset directory");

  auto* scale = app.add_subcommand("scale", "Scaling frontier, linear fit and extrapolation");
  scale->add_option("--store", o.store, "Run store directory");
  scale->add_option("--task", o.task, "moa, target, molecule or discovery");
  scale->add_option("--target-accuracy", o.target_accuracy, "Target metric (percent for accuracy tasks)");
  scale->add_option("--current", o.current, "Current metric (default: frontier best)");
  scale->add_option("--replicates", o.replicates, "Wells per additional molecule");

  auto* report = app.add_subcommand("report", "Write tables, plots and provenance");
  report->add_option("--store", o.store, "Run store directory");
  report->add_option("--out", o.out, "Report directory")->required();
  report->add_option("--dataset", o.dataset, "Dataset directory for the embedding plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (prep->parsed()) return cmd_prep(o);
    if (zoo->parsed()) return cmd_zoo(o);
    if (eval->parsed()) return cmd_eval(o);
    if (scale->parsed()) return cmd_scale(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const Error& e) {
    return report_error(kind_name(e.kind()), e.exit_code(), e.what());
  } catch (const std::exception& e) {
    return report_error("data", static_cast<int>(ErrorKind::data), e.what());
  }
  return 0;
}
