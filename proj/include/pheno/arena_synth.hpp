#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pheno {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct UniverseConfig {
  int n_targets = 10;
  int n_moas = 20;
  int n_compounds = 100;
  int n_crispr = -1;  // -1: one knockout per target
  int d_latent = 8;
  int d_feat = 32;
  double target_scale = 1.0;
  double offset_scale = 0.3;
  double potency_min = 0.5;
  double potency_max = 2.0;
  double cell_noise = 1.0;
  double control_scale = 1.0;
  bool activators = true;  // false: every compound inhibits its target
};

// A compound either inhibits or activates its target. When there are more
// MoAs than targets, the two modes of a target land in distinct MoAs.
enum class ActionMode : int { inhibitor = 0, activator = 1 };

struct CompoundSpec {
  int compound_id = 0;
  int target_id = 0;
  int moa_id = 0;
  ActionMode mode = ActionMode::inhibitor;
  Vector effect;
  double potency = 1.0;
};

struct CrisprPert {
  int pert_id = 0;
  int gene_id = 0;  // == target_id
  Vector effect;    // -1 * target vector
};

struct MoaGroup {
  int moa_id = 0;
  std::vector<int> target_ids;
  int mode = -1;  // -1: both action modes; otherwise ActionMode value
};

struct Universe {
  UniverseConfig config;
  std::uint64_t seed = 0;
  std::vector<Vector> targets;
  std::vector<MoaGroup> moas;
  std::vector<CompoundSpec> compounds;
  std::vector<CrisprPert> crispr_perts;
  Matrix latent_to_feature;  // d_feat x d_latent
  Vector control_mean;

  int moa_of(int target_id, ActionMode mode) const;
};

/// Deterministic universe. Throws ConfigError on zero counts, d_latent < 2
/// or more MoAs than (target, mode) slots.
Universe generate_universe(const UniverseConfig& cfg, std::uint64_t seed);

/// MoA assignment rule shared by the generator and tests.
int moa_for(int n_targets, int n_moas, int target_id, ActionMode mode);

enum class PertType : int { compound = 0, crispr = 1, control = 2 };

const char* to_string(PertType t);
PertType pert_type_from_string(const std::string& s);

struct Perturbation {
  PertType type = PertType::control;
  int id = 0;
};

/// Resolved nuisance effects for one well.
struct NuisanceContext {
  Vector additive;  // plate + batch offsets + well-position gradient
  Vector log_gain;  // multiplicative source gain, exp(log_gain)

  static NuisanceContext zero(int d_feat);
};

/// Expected per-cell phenotype (before noise).
Vector expected_phenotype(const Universe& u, const Perturbation& pert, const NuisanceContext& ctx);

/// n_cells x d_feat matrix of simulated single-cell profiles.
Matrix simulate_cells(const Universe& u, const Perturbation& pert, const NuisanceContext& ctx,
                      int n_cells, std::uint64_t seed);

struct WellRecord {
  int well_id = 0;
  int plate = 0;
  int batch = 0;
  int source = 0;
  int row = 0;
  int col = 0;
  PertType pert_type = PertType::control;
  int pert_id = 0;
  int replicate_index = 0;
  Vector features;
};

enum class Split : int { train = 0, arena_holdout = 1 };

struct CompoundLabel {
  int moa_id = 0;
  int target_id = 0;
};

struct SplitPlan {
  int n_arena_compounds = 20;
  int replicates = 5;
  int holdout_replicates = 2;  // per arena compound
  int crispr_replicates = 5;
  int n_plates = 4;
  int n_batches = 2;
  int n_sources = 2;
  double control_fraction = 0.1;
  int cells_per_well = 16;
  int plate_cols = 24;
  double plate_offset_sd = 0.5;
  double batch_offset_sd = 0.3;
  double source_log_gain_sd = 0.1;
  double well_gradient_sd = 0.2;
};

struct NuisanceModel {
  std::vector<Vector> plate_offsets;
  std::vector<Vector> batch_offsets;
  std::vector<Vector> source_log_gains;
  std::vector<Vector> row_gradients;  // per source
  std::vector<Vector> col_gradients;  // per source
  int plate_rows = 16;
  int plate_cols = 24;

  NuisanceContext context(int plate, int batch, int source, int row, int col) const;
};

struct ArenaDataset {
  int d_feat = 0;
  int replicates = 0;
  int n_plates = 0;
  int n_batches = 0;
  int n_sources = 0;
  int plate_rows = 0;
  int plate_cols = 0;
  std::vector<WellRecord> wells;
  std::vector<Split> split;  // indexed like wells
  std::map<int, CompoundLabel> labels;
  std::map<int, int> crispr_genes;  // crispr pert_id -> target_id
  std::vector<int> arena_compounds;
  std::vector<int> ood_pool;

  std::size_t size() const { return wells.size(); }
  bool is_holdout(std::size_t i) const { return split[i] == Split::arena_holdout; }
  bool is_arena_compound(int compound_id) const;
  int n_moas() const;
  int n_targets() const;
  /// Stack feature vectors of the given well indices into rows.
  Matrix features(const std::vector<int>& idx) const;
};

/// Wells of every compound are dealt compound-major across plates, so the
/// replicates of one compound occupy consecutive plates.
ArenaDataset assemble_dataset(const Universe& u, const SplitPlan& plan, std::uint64_t seed);

/// Throws InputError naming the first violated dataset invariant.
void validate_dataset(const ArenaDataset& d);

/// Immutable selection of wells from a shared dataset.
struct DatasetView {
  std::shared_ptr<const ArenaDataset> data;
  std::vector<int> wells;  // ascending indices into data->wells
  std::vector<int> ood_selected;
  double replicate_fraction = 1.0;

  std::vector<int> train_wells() const;
  std::vector<int> holdout_wells() const;
};

DatasetView full_view(std::shared_ptr<const ArenaDataset> data);

/// Keeps every arena compound, ood_count OOD compounds and
/// ceil(fraction * n) of each kept compound's train wells. Holdout wells are
/// passed through untouched.
DatasetView subsample_view(std::shared_ptr<const ArenaDataset> data, int ood_count,
                           double replicate_fraction, std::uint64_t seed);

int ceil_fraction(double fraction, int n);

}  // namespace pheno
