#pragma once

#include "pheno/arena_synth.hpp"
#include "pheno/train_protocols.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pheno {

enum class Supervision { ibp, task };

const char* to_string(Supervision s);
Supervision supervision_from_string(const std::string& s);

/// One cell of the experiment grid.
struct RunConfig {
  Supervision supervision = Supervision::ibp;
  Task task = Task::moa;
  int depth = 1;
  int width = 16;
  int ood_count = 0;
  double replicate_fraction = 1.0;
  AdversarialWeights adversarial;
  std::uint64_t seed = 0;

  bool valid() const;  // discovery is zero-shot and needs IBP
  bool operator==(const RunConfig&) const = default;
};

/// Canonical text form used for hashing; every field participates.
std::string canonical_string(const RunConfig& c);
std::uint64_t fingerprint_value(const RunConfig& c);
/// 16 hex digits of fingerprint_value.
std::string fingerprint(const RunConfig& c);
/// Seed of the run's private streams, independent of scheduling.
std::uint64_t run_seed(const RunConfig& c);

enum class RunStatus { pending, done, failed };

const char* to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

struct RunRecord {
  RunConfig config;
  std::string fingerprint;
  RunStatus status = RunStatus::pending;
  std::map<std::string, double> metrics;
  int epochs = 0;
  int best_epoch = 0;
  double best_validation = 0.0;
  double wall_time = 0.0;  // seconds, excluded from comparisons
  std::string cause;       // failure message

  /// Equality of everything except wall_time, with bitwise metric equality.
  bool same_outcome(const RunRecord& other) const;
};

/// Partial match on grid axes; a config matching every set field is dropped.
struct GridExclusion {
  std::optional<Supervision> supervision;
  std::optional<Task> task;
  std::optional<int> depth;
  std::optional<int> width;
  std::optional<int> ood_count;
  std::optional<double> replicate_fraction;

  bool matches(const RunConfig& c) const;
};

struct GridAxes {
  std::vector<int> depths{1};
  std::vector<int> widths{16};
  std::vector<int> ood_counts{0};
  std::vector<double> replicate_fractions{1.0};
  std::vector<Supervision> supervisions{Supervision::ibp, Supervision::task};
  std::vector<Task> tasks{Task::moa};
  std::vector<std::uint64_t> seeds{0};
  AdversarialWeights adversarial;
  std::vector<GridExclusion> exclusions;
};

/// Desk-scale axes: depths {1,3,6}, widths {16,32,64}, OOD {0,.25,.5,1} of
/// the pool, replicate fractions {.2,.6,1}, both supervisions.
GridAxes desk_grid(int ood_pool_size);

/// round(f * pool) for each fraction.
std::vector<int> ood_counts_for(int pool_size, const std::vector<double>& fractions);

/// Cartesian product in axis order depth, width, ood, replicate fraction,
/// supervision, task, seed, minus invalid and excluded configs.
std::vector<RunConfig> build_grid(const GridAxes& axes);

/// Distinct trained networks behind a grid: an IBP backbone is shared by
/// every task probed on it, a task-supervised network is trained per task.
std::size_t unique_models(const std::vector<RunConfig>& grid);

/// Trains and evaluates one config. Pheno errors become status failed with
/// the message as cause.
RunRecord execute_run(const RunConfig& cfg, const std::shared_ptr<const ArenaDataset>& data, const TrainConfig& tcfg);

struct ZooOptions {
  int parallelism = 1;
  bool reset = false;
  /// Stop claiming new runs after this many have been started (a simulated
  /// kill). Negative: no limit.
  int max_runs = -1;
  std::function<void(const RunRecord&)> on_record;
};

/// Executes every grid config whose fingerprint is not yet in the store and
/// appends the records. Returns the newly executed records in grid order.
std::vector<RunRecord> run_zoo(const std::vector<RunConfig>& grid, const std::shared_ptr<const ArenaDataset>& data,
                               const TrainConfig& tcfg, const std::string& store_path, const ZooOptions& opts = {});

}  // namespace pheno
