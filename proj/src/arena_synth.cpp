#include "pheno/arena_synth.hpp"

#include "pheno/errors.hpp"
#include "pheno/profile_prep.hpp"
#include "pheno/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

namespace pheno {

namespace {

Vector normal_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = sd * rng.normal();
  return v;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

int moa_for(int n_targets, int n_moas, int target_id, ActionMode mode) {
  if (n_moas <= n_targets) return target_id % n_moas;
  const int split = n_moas - n_targets;  // targets whose modes are separate MoAs
  if (target_id < split) return 2 * target_id + static_cast<int>(mode);
  return 2 * split + (target_id - split);
}

int Universe::moa_of(int target_id, ActionMode mode) const {
  return moa_for(config.n_targets, config.n_moas, target_id, mode);
}

Universe generate_universe(const UniverseConfig& cfg, std::uint64_t seed) {
  require(cfg.n_targets >= 1, "n_targets must be >= 1");
  require(cfg.n_moas >= 1, "n_moas must be >= 1");
  require(cfg.n_compounds >= 1, "n_compounds must be >= 1");
  require(cfg.d_latent >= 2, "d_latent must be >= 2");
  require(cfg.d_feat >= cfg.d_latent, "d_feat must be >= d_latent");
  require(cfg.n_moas <= 2 * cfg.n_targets, "n_moas cannot exceed 2 * n_targets (two action modes per target)");
  require(cfg.activators || cfg.n_moas <= cfg.n_targets, "without activators n_moas cannot exceed n_targets");
  require(cfg.n_crispr <= cfg.n_targets, "n_crispr cannot exceed n_targets");
  require(cfg.potency_min > 0 && cfg.potency_max >= cfg.potency_min, "potency range must be positive");
  require(cfg.cell_noise >= 0 && cfg.offset_scale >= 0, "noise scales must be >= 0");

  Universe u;
  u.config = cfg;
  u.seed = seed;
  const int dl = cfg.d_latent;

  Rng target_rng(seed, "universe/targets");
  for (int t = 0; t < cfg.n_targets; ++t) {
    Vector v = normal_vector(target_rng, dl);
    u.targets.push_back(cfg.target_scale * v / v.norm());
  }

  u.moas.resize(static_cast<std::size_t>(cfg.n_moas));
  for (int m = 0; m < cfg.n_moas; ++m) u.moas[m].moa_id = m;
  for (int t = 0; t < cfg.n_targets; ++t) {
    const int a = moa_for(cfg.n_targets, cfg.n_moas, t, ActionMode::inhibitor);
    const int b = moa_for(cfg.n_targets, cfg.n_moas, t, ActionMode::activator);
    u.moas[a].target_ids.push_back(t);
    u.moas[a].mode = a == b ? -1 : static_cast<int>(ActionMode::inhibitor);
    if (a != b) {
      u.moas[b].target_ids.push_back(t);
      u.moas[b].mode = static_cast<int>(ActionMode::activator);
    }
  }

  // Round-robin over (target, mode) slots, then permute which compound id
  // receives which slot.
  std::vector<int> slot_of(static_cast<std::size_t>(cfg.n_compounds));
  std::iota(slot_of.begin(), slot_of.end(), 0);
  Rng assign_rng(seed, "universe/assign");
  assign_rng.shuffle(slot_of);

  Rng effect_rng(seed, "universe/effects");
  const double log_lo = std::log(cfg.potency_min);
  const double log_hi = std::log(cfg.potency_max);
  for (int c = 0; c < cfg.n_compounds; ++c) {
    const int slot = slot_of[static_cast<std::size_t>(c)];
    CompoundSpec spec;
    spec.compound_id = c;
    spec.target_id = slot % cfg.n_targets;
    spec.mode = !cfg.activators || (slot / cfg.n_targets) % 2 == 0 ? ActionMode::inhibitor : ActionMode::activator;
    spec.moa_id = moa_for(cfg.n_targets, cfg.n_moas, spec.target_id, spec.mode);
    Rng crng = effect_rng.split(static_cast<std::uint64_t>(c));
    const double sign = spec.mode == ActionMode::inhibitor ? -1.0 : 1.0;
    spec.effect = sign * u.targets[spec.target_id] +
                  normal_vector(crng, dl, cfg.offset_scale / std::sqrt(static_cast<double>(dl)));
    spec.potency = std::exp(crng.uniform(log_lo, log_hi));
    u.compounds.push_back(std::move(spec));
  }

  const int n_crispr = cfg.n_crispr < 0 ? cfg.n_targets : cfg.n_crispr;
  for (int g = 0; g < n_crispr; ++g) {
    u.crispr_perts.push_back(CrisprPert{g, g, -u.targets[g]});
  }

  Rng map_rng(seed, "universe/map");
  u.latent_to_feature.resize(cfg.d_feat, dl);
  for (int i = 0; i < cfg.d_feat; ++i)
    for (int j = 0; j < dl; ++j) u.latent_to_feature(i, j) = map_rng.normal();
  // Columns with unit norm keep effect magnitudes comparable to target_scale.
  for (int j = 0; j < dl; ++j) u.latent_to_feature.col(j).normalize();
  u.control_mean = normal_vector(map_rng, cfg.d_feat, cfg.control_scale);
  return u;
}

const char* to_string(PertType t) {
  switch (t) {
    case PertType::compound: return "compound";
    case PertType::crispr: return "crispr";
    case PertType::control: return "control";
  }
  return "?";
}

PertType pert_type_from_string(const std::string& s) {
  if (s == "compound") return PertType::compound;
  if (s == "crispr") return PertType::crispr;
  if (s == "control") return PertType::control;
  throw InputError("unknown pert_type '" + s + "'");
}

NuisanceContext NuisanceContext::zero(int d_feat) {
  return NuisanceContext{Vector::Zero(d_feat), Vector::Zero(d_feat)};
}

Vector expected_phenotype(const Universe& u, const Perturbation& pert, const NuisanceContext& ctx) {
  Vector base = u.control_mean;
  switch (pert.type) {
    case PertType::control: break;
    case PertType::compound: {
      if (pert.id < 0 || pert.id >= static_cast<int>(u.compounds.size()))
        throw InputError("compound id " + std::to_string(pert.id) + " out of range");
      const auto& c = u.compounds[static_cast<std::size_t>(pert.id)];
      base += c.potency * (u.latent_to_feature * c.effect);
      break;
    }
    case PertType::crispr: {
      if (pert.id < 0 || pert.id >= static_cast<int>(u.crispr_perts.size()))
        throw InputError("crispr id " + std::to_string(pert.id) + " out of range");
      base += u.latent_to_feature * u.crispr_perts[static_cast<std::size_t>(pert.id)].effect;
      break;
    }
  }
  return ((base + ctx.additive).array() * ctx.log_gain.array().exp()).matrix();
}

Matrix simulate_cells(const Universe& u, const Perturbation& pert, const NuisanceContext& ctx, int n_cells,
                      std::uint64_t seed) {
  if (n_cells < 1) throw InputError("simulate_cells: n_cells must be >= 1");
  const int d = u.config.d_feat;
  if (ctx.additive.size() != d || ctx.log_gain.size() != d)
    throw InputError("simulate_cells: nuisance context has wrong dimension");
  const Vector gain = ctx.log_gain.array().exp();
  const Vector mu = expected_phenotype(u, pert, ctx);
  Rng rng(seed, "cells");
  Matrix cells(n_cells, d);
  for (int i = 0; i < n_cells; ++i)
    for (int j = 0; j < d; ++j) cells(i, j) = mu(j) + gain(j) * u.config.cell_noise * rng.normal();
  return cells;
}

NuisanceContext NuisanceModel::context(int plate, int batch, int source, int row, int col) const {
  NuisanceContext ctx;
  const double r = plate_rows > 1 ? static_cast<double>(row) / (plate_rows - 1) - 0.5 : 0.0;
  const double c = plate_cols > 1 ? static_cast<double>(col) / (plate_cols - 1) - 0.5 : 0.0;
  ctx.additive = plate_offsets.at(plate) + batch_offsets.at(batch) + r * row_gradients.at(source) +
                 c * col_gradients.at(source);
  ctx.log_gain = source_log_gains.at(source);
  return ctx;
}

bool ArenaDataset::is_arena_compound(int compound_id) const {
  return std::binary_search(arena_compounds.begin(), arena_compounds.end(), compound_id);
}

int ArenaDataset::n_moas() const {
  int m = 0;
  for (const auto& [id, l] : labels) m = std::max(m, l.moa_id + 1);
  return m;
}

int ArenaDataset::n_targets() const {
  int t = 0;
  for (const auto& [id, l] : labels) t = std::max(t, l.target_id + 1);
  for (const auto& [id, g] : crispr_genes) t = std::max(t, g + 1);
  return t;
}

Matrix ArenaDataset::features(const std::vector<int>& idx) const {
  Matrix x(static_cast<Eigen::Index>(idx.size()), d_feat);
  for (std::size_t r = 0; r < idx.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = wells.at(idx[r]).features.transpose();
  return x;
}

namespace {

struct PendingWell {
  PertType type;
  int id;
  int replicate;
  Split split;
};

}  // namespace

ArenaDataset assemble_dataset(const Universe& u, const SplitPlan& plan, std::uint64_t seed) {
  const int n_comp = static_cast<int>(u.compounds.size());
  require(plan.replicates >= 1, "replicates must be >= 1");
  require(plan.n_arena_compounds >= 0, "n_arena_compounds must be >= 0");
  require(plan.n_arena_compounds <= n_comp,
          "plan asks for " + std::to_string(plan.n_arena_compounds) + " arena compounds but the universe has " +
              std::to_string(n_comp));
  require(plan.holdout_replicates >= 0 && plan.holdout_replicates <= plan.replicates,
          "holdout_replicates must lie in [0, replicates]");
  require(plan.n_plates >= 1 && plan.n_batches >= 1 && plan.n_sources >= 1, "plate/batch/source counts must be >= 1");
  require(plan.n_batches <= plan.n_plates && plan.n_sources <= plan.n_batches,
          "need n_sources <= n_batches <= n_plates");
  require(plan.control_fraction >= 0 && plan.control_fraction < 1, "control_fraction must lie in [0, 1)");
  require(plan.cells_per_well >= 1, "cells_per_well must be >= 1");
  require(plan.plate_cols >= 1, "plate_cols must be >= 1");
  require(plan.crispr_replicates >= 0, "crispr_replicates must be >= 0");

  const int d = u.config.d_feat;
  ArenaDataset ds;
  ds.d_feat = d;
  ds.replicates = plan.replicates;
  ds.n_plates = plan.n_plates;
  ds.n_batches = plan.n_batches;
  ds.n_sources = plan.n_sources;

  std::vector<int> order(static_cast<std::size_t>(n_comp));
  std::iota(order.begin(), order.end(), 0);
  Rng arena_rng(seed, "dataset/arena");
  arena_rng.shuffle(order);
  ds.arena_compounds.assign(order.begin(), order.begin() + plan.n_arena_compounds);
  ds.ood_pool.assign(order.begin() + plan.n_arena_compounds, order.end());
  std::sort(ds.arena_compounds.begin(), ds.arena_compounds.end());
  std::sort(ds.ood_pool.begin(), ds.ood_pool.end());
  for (const auto& c : u.compounds) ds.labels[c.compound_id] = CompoundLabel{c.moa_id, c.target_id};
  for (const auto& g : u.crispr_perts) ds.crispr_genes[g.pert_id] = g.gene_id;

  // Deal wells compound-major across plates: arena, then OOD, then CRISPR.
  std::vector<std::vector<PendingWell>> per_plate(static_cast<std::size_t>(plan.n_plates));
  std::size_t cursor = 0;
  auto deal = [&](PendingWell w) { per_plate[cursor++ % per_plate.size()].push_back(w); };
  for (int c : ds.arena_compounds) {
    for (int r = 0; r < plan.replicates; ++r) {
      const bool held = r >= plan.replicates - plan.holdout_replicates;
      deal({PertType::compound, c, r, held ? Split::arena_holdout : Split::train});
    }
  }
  for (int c : order) {
    if (ds.is_arena_compound(c)) continue;
    for (int r = 0; r < plan.replicates; ++r) deal({PertType::compound, c, r, Split::train});
  }
  for (const auto& g : u.crispr_perts)
    for (int r = 0; r < plan.crispr_replicates; ++r) deal({PertType::crispr, g.pert_id, r, Split::arena_holdout});

  const double ctrl_ratio = plan.control_fraction / (1.0 - plan.control_fraction);
  int ctrl_counter = 0;
  std::size_t max_wells = 0;
  for (auto& wells : per_plate) {
    int n_ctrl = static_cast<int>(std::ceil(ctrl_ratio * static_cast<double>(wells.size()) - 1e-9));
    if (plan.control_fraction > 0) n_ctrl = std::max(n_ctrl, 1);
    for (int k = 0; k < n_ctrl; ++k) wells.push_back({PertType::control, 0, ctrl_counter++, Split::train});
    max_wells = std::max(max_wells, wells.size());
  }
  ds.plate_cols = plan.plate_cols;
  ds.plate_rows = std::max(1, static_cast<int>((max_wells + plan.plate_cols - 1) / plan.plate_cols));

  NuisanceModel nm;
  nm.plate_rows = ds.plate_rows;
  nm.plate_cols = ds.plate_cols;
  Rng nrng(seed, "dataset/nuisance");
  for (int p = 0; p < plan.n_plates; ++p) nm.plate_offsets.push_back(normal_vector(nrng, d, plan.plate_offset_sd));
  for (int b = 0; b < plan.n_batches; ++b) nm.batch_offsets.push_back(normal_vector(nrng, d, plan.batch_offset_sd));
  for (int s = 0; s < plan.n_sources; ++s) {
    nm.source_log_gains.push_back(normal_vector(nrng, d, plan.source_log_gain_sd));
    nm.row_gradients.push_back(normal_vector(nrng, d, plan.well_gradient_sd));
    nm.col_gradients.push_back(normal_vector(nrng, d, plan.well_gradient_sd));
  }

  struct Placed {
    int plate, row, col;
    PendingWell w;
  };
  std::vector<Placed> placed;
  for (int p = 0; p < plan.n_plates; ++p) {
    auto& wells = per_plate[static_cast<std::size_t>(p)];
    std::vector<int> pos(static_cast<std::size_t>(ds.plate_rows * ds.plate_cols));
    std::iota(pos.begin(), pos.end(), 0);
    Rng layout(seed, "dataset/layout", static_cast<std::uint64_t>(p));
    layout.shuffle(pos);
    for (std::size_t k = 0; k < wells.size(); ++k)
      placed.push_back({p, pos[k] / ds.plate_cols, pos[k] % ds.plate_cols, wells[k]});
  }
  std::sort(placed.begin(), placed.end(), [](const Placed& a, const Placed& b) {
    return std::tie(a.plate, a.row, a.col) < std::tie(b.plate, b.row, b.col);
  });

  ds.wells.reserve(placed.size());
  ds.split.reserve(placed.size());
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const auto& pl = placed[i];
    WellRecord rec;
    rec.well_id = static_cast<int>(i);
    rec.plate = pl.plate;
    rec.batch = pl.plate * plan.n_batches / plan.n_plates;
    rec.source = rec.batch * plan.n_sources / plan.n_batches;
    rec.row = pl.row;
    rec.col = pl.col;
    rec.pert_type = pl.w.type;
    rec.pert_id = pl.w.id;
    rec.replicate_index = pl.w.replicate;
    const auto ctx = nm.context(rec.plate, rec.batch, rec.source, rec.row, rec.col);
    const Matrix cells =
        simulate_cells(u, Perturbation{rec.pert_type, rec.pert_id}, ctx, plan.cells_per_well,
                       hash_combine(seed, static_cast<std::uint64_t>(i)));
    rec.features = aggregate_well(cells);
    ds.wells.push_back(std::move(rec));
    ds.split.push_back(pl.w.split);
  }
  return ds;
}

void validate_dataset(const ArenaDataset& d) {
  if (d.split.size() != d.wells.size()) throw InputError("split tags do not cover every well");
  std::set<std::tuple<int, int, int>> positions;
  std::set<int> ids;
  for (std::size_t i = 0; i < d.wells.size(); ++i) {
    const auto& w = d.wells[i];
    const std::string where = "well " + std::to_string(w.well_id);
    if (!ids.insert(w.well_id).second) throw InputError(where + ": duplicate well_id");
    if (!positions.insert({w.plate, w.row, w.col}).second) throw InputError(where + ": duplicate (plate, row, col)");
    if (w.features.size() != d.d_feat) throw InputError(where + ": wrong feature dimension");
    if (!w.features.allFinite()) throw InputError(where + ": non-finite features");
    if (w.pert_type == PertType::compound && !d.labels.contains(w.pert_id))
      throw InputError(where + ": unknown compound " + std::to_string(w.pert_id));
    if (w.pert_type == PertType::crispr && !d.crispr_genes.contains(w.pert_id))
      throw InputError(where + ": unknown crispr perturbation " + std::to_string(w.pert_id));
    if (d.is_holdout(i) && w.pert_type == PertType::compound && !d.is_arena_compound(w.pert_id))
      throw InputError(where + ": holdout well of a non-arena compound");
  }
  for (int c : d.ood_pool)
    if (d.is_arena_compound(c)) throw InputError("compound " + std::to_string(c) + " is both arena and OOD");
}

std::vector<int> DatasetView::train_wells() const {
  std::vector<int> out;
  for (int i : wells)
    if (!data->is_holdout(static_cast<std::size_t>(i))) out.push_back(i);
  return out;
}

std::vector<int> DatasetView::holdout_wells() const {
  std::vector<int> out;
  for (int i : wells)
    if (data->is_holdout(static_cast<std::size_t>(i))) out.push_back(i);
  return out;
}

DatasetView full_view(std::shared_ptr<const ArenaDataset> data) {
  DatasetView v;
  v.wells.resize(data->size());
  std::iota(v.wells.begin(), v.wells.end(), 0);
  v.ood_selected = data->ood_pool;
  v.data = std::move(data);
  return v;
}

int ceil_fraction(double fraction, int n) {
  return std::max(1, static_cast<int>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
}

DatasetView subsample_view(std::shared_ptr<const ArenaDataset> data, int ood_count, double replicate_fraction,
                           std::uint64_t seed) {
  if (!(replicate_fraction > 0.0 && replicate_fraction <= 1.0))
    throw RangeError("replicate_fraction must lie in (0, 1]");
  if (ood_count < 0 || ood_count > static_cast<int>(data->ood_pool.size()))
    throw RangeError("ood_count " + std::to_string(ood_count) + " exceeds the OOD pool of " +
                     std::to_string(data->ood_pool.size()));

  std::vector<int> pool = data->ood_pool;
  Rng(seed, "view/ood").shuffle(pool);
  std::vector<int> chosen(pool.begin(), pool.begin() + ood_count);
  std::sort(chosen.begin(), chosen.end());

  std::map<int, std::vector<int>> train_by_compound;
  std::vector<int> keep;
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& w = data->wells[i];
    if (data->is_holdout(i) || w.pert_type == PertType::control) {
      keep.push_back(static_cast<int>(i));
    } else if (w.pert_type == PertType::compound) {
      const bool kept = data->is_arena_compound(w.pert_id) ||
                        std::binary_search(chosen.begin(), chosen.end(), w.pert_id);
      if (kept) train_by_compound[w.pert_id].push_back(static_cast<int>(i));
    }
  }
  for (auto& [compound, wells] : train_by_compound) {
    const int n_keep = ceil_fraction(replicate_fraction, static_cast<int>(wells.size()));
    Rng(seed, "view/replicates", static_cast<std::uint64_t>(compound)).shuffle(wells);
    keep.insert(keep.end(), wells.begin(), wells.begin() + n_keep);
  }
  std::sort(keep.begin(), keep.end());

  DatasetView v;
  v.data = std::move(data);
  v.wells = std::move(keep);
  v.ood_selected = std::move(chosen);
  v.replicate_fraction = replicate_fraction;
  return v;
}

}  // namespace pheno
