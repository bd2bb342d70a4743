#include "pheno/zoo_runner.hpp"

#include "pheno/dataset_io.hpp"
#include "pheno/errors.hpp"
#include "pheno/pheno_eval.hpp"
#include "pheno/rng.hpp"
#include "pheno/run_store.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <thread>

namespace pheno {

const char* to_string(Supervision s) { return s == Supervision::ibp ? "ibp" : "task"; }

Supervision supervision_from_string(const std::string& s) {
  if (s == "ibp") return Supervision::ibp;
  if (s == "task") return Supervision::task;
  throw ConfigError("unknown supervision '" + s + "'");
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::pending: return "pending";
    case RunStatus::done: return "done";
    case RunStatus::failed: return "failed";
  }
  return "?";
}

RunStatus run_status_from_string(const std::string& s) {
  if (s == "pending") return RunStatus::pending;
  if (s == "done") return RunStatus::done;
  if (s == "failed") return RunStatus::failed;
  throw ConfigError("unknown run status '" + s + "'");
}

bool RunConfig::valid() const {
  if (task == Task::discovery && supervision != Supervision::ibp) return false;
  return depth >= 1 && width >= 1 && ood_count >= 0 && replicate_fraction > 0 && replicate_fraction <= 1;
}

std::string canonical_string(const RunConfig& c) {
  return std::string("sup=") + to_string(c.supervision) + ";task=" + to_string(c.task) +
         ";depth=" + std::to_string(c.depth) + ";width=" + std::to_string(c.width) +
         ";ood=" + std::to_string(c.ood_count) + ";rep=" + format_double(c.replicate_fraction) +
         ";adv=" + format_double(c.adversarial.well) + "," + format_double(c.adversarial.plate) + "," +
         format_double(c.adversarial.batch) + "," + format_double(c.adversarial.source) +
         ";seed=" + std::to_string(c.seed);
}

std::uint64_t fingerprint_value(const RunConfig& c) { return mix64(fnv1a(canonical_string(c))); }

std::string fingerprint(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint_value(c)));
  return buf;
}

std::uint64_t run_seed(const RunConfig& c) { return hash_combine(c.seed, fingerprint_value(c)); }

bool RunRecord::same_outcome(const RunRecord& o) const {
  if (!(config == o.config) || fingerprint != o.fingerprint || status != o.status || epochs != o.epochs ||
      best_epoch != o.best_epoch || cause != o.cause || metrics.size() != o.metrics.size())
    return false;
  auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  if (!same(best_validation, o.best_validation)) return false;
  for (const auto& [k, v] : metrics) {
    const auto it = o.metrics.find(k);
    if (it == o.metrics.end() || !same(v, it->second)) return false;
  }
  return true;
}

bool GridExclusion::matches(const RunConfig& c) const {
  return (!supervision || *supervision == c.supervision) && (!task || *task == c.task) &&
         (!depth || *depth == c.depth) && (!width || *width == c.width) && (!ood_count || *ood_count == c.ood_count) &&
         (!replicate_fraction || *replicate_fraction == c.replicate_fraction);
}

std::vector<int> ood_counts_for(int pool_size, const std::vector<double>& fractions) {
  std::vector<int> out;
  for (double f : fractions) {
    if (f < 0 || f > 1) throw ConfigError("OOD fractions must lie in [0, 1]");
    out.push_back(static_cast<int>(std::lround(f * pool_size)));
  }
  return out;
}

GridAxes desk_grid(int ood_pool_size) {
  GridAxes a;
  a.depths = {1, 3, 6};
  a.widths = {16, 32, 64};
  a.ood_counts = ood_counts_for(ood_pool_size, {0.0, 0.25, 0.5, 1.0});
  a.replicate_fractions = {0.2, 0.6, 1.0};
  a.supervisions = {Supervision::ibp, Supervision::task};
  return a;
}

std::vector<RunConfig> build_grid(const GridAxes& a) {
  std::vector<RunConfig> out;
  for (int depth : a.depths)
    for (int width : a.widths)
      for (int ood : a.ood_counts)
        for (double rep : a.replicate_fractions)
          for (Supervision sup : a.supervisions)
            for (Task task : a.tasks)
              for (std::uint64_t seed : a.seeds) {
                RunConfig c{sup, task, depth, width, ood, rep, a.adversarial, seed};
                if (!c.valid()) continue;
                bool excluded = false;
                for (const auto& e : a.exclusions) excluded = excluded || e.matches(c);
                if (!excluded) out.push_back(c);
              }
  return out;
}

std::size_t unique_models(const std::vector<RunConfig>& grid) {
  std::set<std::string> keys;
  for (RunConfig c : grid) {
    if (c.supervision == Supervision::ibp) c.task = Task::molecule;
    keys.insert(canonical_string(c));
  }
  return keys.size();
}

namespace {

void add_discovery_metrics(RunRecord& r, const ArenaDataset& d, const Backbone& bb) {
  std::vector<int> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  const Matrix raw = d.features(all);
  const auto model = discovery_eval(d, bb.features(raw));
  const auto base = discovery_eval(d, raw);
  if (model.empty()) throw InputError("no knockout is eligible for discovery");
  double sum = 0, sum_base = 0;
  int wins = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const std::string id = std::to_string(model[i].pert_id);
    r.metrics["auc/" + id] = model[i].auc;
    r.metrics["auc_baseline/" + id] = base[i].auc;
    sum += model[i].auc;
    sum_base += base[i].auc;
    if (model[i].auc > base[i].auc) ++wins;
  }
  const double n = static_cast<double>(model.size());
  r.metrics["auc"] = sum / n;
  r.metrics["auc_baseline"] = sum_base / n;
  r.metrics["auc_wins"] = wins;
  r.metrics["n_eligible"] = n;
}

void add_probe_metrics(RunRecord& r, const ProbeResult& p) {
  r.metrics["topk"] = p.holdout_topk;
  r.metrics["cce"] = p.holdout_cce;
  r.metrics["chance"] = p.chance;
  r.metrics["n_holdout"] = p.n_holdout;
  r.metrics["coverage_warnings"] = static_cast<double>(p.warnings.size());
}

}  // namespace

RunRecord execute_run(const RunConfig& cfg, const std::shared_ptr<const ArenaDataset>& data, const TrainConfig& tcfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord r;
  r.config = cfg;
  r.fingerprint = fingerprint(cfg);
  try {
    if (!cfg.valid()) throw ConfigError("invalid run config " + canonical_string(cfg));
    const std::uint64_t seed = run_seed(cfg);
    const DatasetView view = subsample_view(data, cfg.ood_count, cfg.replicate_fraction, seed);
    TrainConfig t = tcfg;
    t.seed = seed;
    t.adversarial = cfg.adversarial;
    const nn::BackboneConfig bc{cfg.depth, cfg.width, data->d_feat, seed};

    int train_wells = 0, ood_wells = 0;
    for (int i : view.train_wells()) {
      const auto& w = data->wells[static_cast<std::size_t>(i)];
      if (w.pert_type != PertType::compound) continue;
      ++train_wells;
      if (!data->is_arena_compound(w.pert_id)) ++ood_wells;
    }
    r.metrics["train_wells"] = train_wells;
    r.metrics["ood_wells"] = ood_wells;

    TrainedModel model = cfg.supervision == Supervision::ibp ? train_ibp(bc, t, view)
                                                             : train_task_supervised(bc, t, view, cfg.task);
    r.epochs = static_cast<int>(model.history.size());
    r.best_epoch = model.best_epoch;
    r.best_validation = model.history.at(static_cast<std::size_t>(model.best_epoch - 1)).val_metric;
    if (cfg.task == Task::discovery) {
      add_discovery_metrics(r, *data, model.backbone);
    } else if (cfg.supervision == Supervision::ibp) {
      add_probe_metrics(r, fit_probe(model, cfg.task, view, t));
    } else {
      add_probe_metrics(r, evaluate_head(model, cfg.task, view));
    }
    r.status = RunStatus::done;
  } catch (const Error& e) {
    r.status = RunStatus::failed;
    r.cause = e.what();
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<RunRecord> run_zoo(const std::vector<RunConfig>& grid, const std::shared_ptr<const ArenaDataset>& data,
                               const TrainConfig& tcfg, const std::string& store_path, const ZooOptions& opts) {
  if (opts.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  RunStore store(store_path, opts.reset);
  std::vector<RunConfig> pending;
  std::set<std::string> queued;
  for (const auto& c : grid) {
    const std::string fp = fingerprint(c);
    if (store.contains(fp) || !queued.insert(fp).second) continue;
    pending.push_back(c);
  }
  const std::size_t limit =
      opts.max_runs < 0 ? pending.size() : std::min(pending.size(), static_cast<std::size_t>(opts.max_runs));

  std::vector<std::optional<RunRecord>> results(limit);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= limit) return;
      try {
        RunRecord r = execute_run(pending[i], data, tcfg);
        store.append(r);
        if (opts.on_record) {
          std::lock_guard lock(callback_mutex);
          opts.on_record(r);
        }
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = limit;
        return;
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opts.parallelism), limit));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<RunRecord> out;
  for (auto& r : results)
    if (r) out.push_back(std::move(*r));
  return out;
}

}  // namespace pheno
