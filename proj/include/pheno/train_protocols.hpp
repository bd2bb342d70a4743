#pragma once

#include "pheno/arena_synth.hpp"
#include "pheno/nn/adamw.hpp"
#include "pheno/nn/backbone.hpp"
#include "pheno/nn/mlp_head.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pheno {

using Backbone = nn::Backbone<double>;
using ProbeHead = nn::MlpHead<double>;

enum class Task { moa, target, molecule, discovery };

const char* to_string(Task t);
Task task_from_string(const std::string& s);

/// Nuisance factors an adversarial head can be asked to predict.
enum class Nuisance { well, plate, batch, source };

const char* to_string(Nuisance f);
inline constexpr Nuisance kNuisances[] = {Nuisance::well, Nuisance::plate, Nuisance::batch, Nuisance::source};

struct AdversarialWeights {
  double well = 0.0;
  double plate = 0.0;
  double batch = 0.0;
  double source = 0.0;

  double operator[](Nuisance f) const;
  bool any() const { return well > 0 || plate > 0 || batch > 0 || source > 0; }
  bool operator==(const AdversarialWeights&) const = default;
};

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 6000;  // clamped to the number of training wells
  int patience = 15;
  int max_epochs = 200;
  double weight_decay = 0.01;
  AdversarialWeights adversarial;
  int adversary_steps = 1;  // nuisance-head updates per minibatch
  std::uint64_t seed = 0;

  /// Throws ConfigError on patience < 1, negative weights or non-positive sizes.
  void validate() const;
};

enum class Objective { minimize, maximize };

struct StopDecision {
  bool stop = false;
  int best_epoch = 0;  // 1-based
};

/// history[i] is the validation metric after epoch i + 1. Ties resolve to
/// the earliest epoch.
StopDecision early_stopper(std::span<const double> history, int patience = 15,
                           Objective objective = Objective::minimize);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

/// Class space of a head: class index -> dataset-level id (compound, MoA or
/// target id).
struct LabelSpace {
  Task task = Task::molecule;
  std::vector<int> ids;

  int n_classes() const { return static_cast<int>(ids.size()); }
  /// -1 when the id is not part of the space.
  int index_of(int id) const;
};

struct TrainedModel {
  Backbone backbone;
  bool frozen = false;
  std::map<std::string, ProbeHead> heads;
  std::map<std::string, LabelSpace> label_spaces;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Task label of a compound well (-1 for wells without one).
int task_label_id(const ArenaDataset& d, const WellRecord& w, Task task);

/// Label space of a task: sorted MoA or target ids of the arena compounds,
/// or the sorted compound ids for molecule classification.
LabelSpace task_label_space(const ArenaDataset& d, Task task);

/// Splits training wells into fit and validation parts: for every
/// perturbation holding at least two of the given wells, one replicate is
/// held out.
struct FitValidation {
  std::vector<int> fit;
  std::vector<int> validation;
};
FitValidation carve_validation(const ArenaDataset& d, const std::vector<int>& wells, std::uint64_t seed);

/// Task loss plus lambda_f times the uniform cross entropy of each nuisance
/// head. Returns task_loss itself when every lambda is zero.
double compose_adversarial_loss(double task_loss, const std::map<Nuisance, Matrix>& nuisance_logits,
                                const AdversarialWeights& lambdas);

/// Molecule classification over every compound in the view's training
/// wells (arena and OOD). Early stopping on held-out replicate loss.
TrainedModel train_ibp(const nn::BackboneConfig& cfg, const TrainConfig& tcfg, const DatasetView& view);

/// Direct supervision on the arena compounds' task labels.
TrainedModel train_task_supervised(const nn::BackboneConfig& cfg, const TrainConfig& tcfg,
                                   const DatasetView& view, Task task);

struct ProbeResult {
  ProbeHead head;
  LabelSpace labels;
  double validation_metric = 0.0;
  double holdout_topk = 0.0;
  double holdout_cce = 0.0;
  double chance = 0.0;
  int n_holdout = 0;
  std::vector<std::string> warnings;  // label coverage issues
};

/// Trains a 3-layer probe on eval-mode features of the frozen backbone using
/// the view's arena-compound training wells and scores it on the holdout.
ProbeResult fit_probe(const TrainedModel& model, Task task, const DatasetView& view, const TrainConfig& tcfg);

/// Holdout metrics of a head trained jointly with the backbone.
ProbeResult evaluate_head(const TrainedModel& model, Task task, const DatasetView& view);

struct NuisanceProbeResult {
  double accuracy = 0.0;  // top-1 on holdout wells
  double chance = 0.0;    // majority-class rate on the same wells
  int n_eval = 0;
};

/// Fits a fresh classifier for one nuisance factor on frozen eval-mode
/// features of the view's compound training wells, scored on holdout wells.
NuisanceProbeResult fit_nuisance_probe(const TrainedModel& model, Nuisance f, const DatasetView& view,
                                       const TrainConfig& tcfg);

/// Hash over every backbone parameter and running statistic.
std::uint64_t parameter_hash(const Backbone& b);

/// Nuisance class of a well and the class count for a dataset.
int nuisance_label(const ArenaDataset& d, const WellRecord& w, Nuisance f);
int nuisance_classes(const ArenaDataset& d, Nuisance f);

struct Checkpoint {
  nn::BackboneConfig config;
  Backbone backbone;
  std::map<std::string, ProbeHead> heads;
  nn::AdamW<double> optimizer;
  int epoch = 0;
  std::uint64_t rng_cursor = 0;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pheno
