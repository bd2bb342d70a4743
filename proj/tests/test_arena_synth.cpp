#include "pheno/arena_synth.hpp"
#include "pheno/dataset_io.hpp"
#include "pheno/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

using namespace pheno;

namespace {

UniverseConfig small_config(int targets, int moas, int compounds) {
  UniverseConfig cfg;
  cfg.n_targets = targets;
  cfg.n_moas = moas;
  cfg.n_compounds = compounds;
  return cfg;
}

bool same_universe(const Universe& a, const Universe& b) {
  if (a.compounds.size() != b.compounds.size() || a.targets.size() != b.targets.size()) return false;
  for (std::size_t i = 0; i < a.compounds.size(); ++i) {
    const auto &x = a.compounds[i], &y = b.compounds[i];
    if (x.target_id != y.target_id || x.moa_id != y.moa_id || x.mode != y.mode || x.potency != y.potency ||
        x.effect != y.effect)
      return false;
  }
  for (std::size_t t = 0; t < a.targets.size(); ++t)
    if (a.targets[t] != b.targets[t]) return false;
  return a.latent_to_feature == b.latent_to_feature && a.control_mean == b.control_mean;
}

std::string csv_bytes(const ArenaDataset& d) {
  const auto path = std::filesystem::temp_directory_path() / "pheno_csv_bytes.csv";
  write_wells_csv(d, path.string());
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate_universe: MoA ids follow the target partition") {
  const Universe u = generate_universe(small_config(4, 2, 8), 7);
  REQUIRE(u.compounds.size() == 8);
  for (const auto& c : u.compounds) {
    CHECK(c.potency > 0);
    CHECK(c.effect.size() == u.config.d_latent);
    const auto& group = u.moas.at(static_cast<std::size_t>(c.moa_id)).target_ids;
    CHECK(std::find(group.begin(), group.end(), c.target_id) != group.end());
  }
  for (const auto& g : u.crispr_perts) {
    CHECK(g.gene_id >= 0);
    CHECK(g.gene_id < 4);
    CHECK(g.effect == -u.targets[static_cast<std::size_t>(g.gene_id)]);
  }
}

TEST_CASE("generate_universe: same seed gives identical universe") {
  const auto cfg = small_config(4, 2, 8);
  CHECK(same_universe(generate_universe(cfg, 7), generate_universe(cfg, 7)));
  CHECK_FALSE(same_universe(generate_universe(cfg, 7), generate_universe(cfg, 8)));
}

TEST_CASE("generate_universe: even partition of 20 targets into 5 MoAs") {
  const Universe u = generate_universe(small_config(20, 5, 100), 1);
  // independent oracle: group size by counting residues
  std::map<int, int> expected;
  for (int t = 0; t < 20; ++t) expected[t % 5] += 1;
  REQUIRE(u.moas.size() == 5);
  for (const auto& m : u.moas) {
    CHECK(m.target_ids.size() == 4);
    CHECK(static_cast<int>(m.target_ids.size()) == expected[m.moa_id]);
  }
  // compounds are spread round-robin across targets
  std::map<int, int> per_target;
  for (const auto& c : u.compounds) per_target[c.target_id] += 1;
  for (const auto& [t, n] : per_target) CHECK(n == 5);
}

TEST_CASE("generate_universe: more MoAs than targets splits action modes") {
  const Universe u = generate_universe(small_config(10, 20, 100), 3);
  std::set<int> seen;
  for (const auto& c : u.compounds) {
    CHECK(c.moa_id == 2 * c.target_id + static_cast<int>(c.mode));
    seen.insert(c.moa_id);
  }
  CHECK(seen.size() == 20);
  const Universe v = generate_universe(small_config(10, 13, 40), 3);
  for (const auto& c : v.compounds) CHECK(c.moa_id < 13);
}

TEST_CASE("generate_universe: without activators every compound inhibits") {
  auto cfg = small_config(6, 6, 30);
  cfg.activators = false;
  cfg.offset_scale = 0.0;
  const Universe u = generate_universe(cfg, 4);
  for (const auto& c : u.compounds) {
    CHECK(c.mode == ActionMode::inhibitor);
    CHECK(c.effect == -u.targets[static_cast<std::size_t>(c.target_id)]);
  }
  cfg.n_moas = 7;
  CHECK_THROWS_AS(generate_universe(cfg, 4), ConfigError);
}

TEST_CASE("generate_universe: invalid configs are rejected") {
  CHECK_THROWS_AS(generate_universe(small_config(0, 1, 1), 1), ConfigError);
  CHECK_THROWS_AS(generate_universe(small_config(1, 0, 1), 1), ConfigError);
  CHECK_THROWS_AS(generate_universe(small_config(1, 1, 0), 1), ConfigError);
  CHECK_THROWS_AS(generate_universe(small_config(3, 7, 5), 1), ConfigError);
  auto cfg = small_config(2, 2, 2);
  cfg.d_latent = 1;
  CHECK_THROWS_AS(generate_universe(cfg, 1), ConfigError);
}

TEST_CASE("simulate_cells: noiseless control equals the control mean") {
  auto cfg = small_config(4, 2, 8);
  cfg.cell_noise = 0;
  const Universe u = generate_universe(cfg, 11);
  const Matrix cells = simulate_cells(u, {PertType::control, 0}, NuisanceContext::zero(cfg.d_feat), 5, 1);
  for (int i = 0; i < 5; ++i) CHECK(cells.row(i).transpose() == u.control_mean);
}

TEST_CASE("simulate_cells: zero potency reproduces the control distribution") {
  Universe u = generate_universe(small_config(4, 2, 8), 11);
  u.compounds[3].potency = 0.0;
  const auto ctx = NuisanceContext::zero(u.config.d_feat);
  CHECK(simulate_cells(u, {PertType::compound, 3}, ctx, 50, 99) == simulate_cells(u, {PertType::control, 0}, ctx, 50, 99));
}

TEST_CASE("simulate_cells: compounds sharing a target have equal expected phenotypes") {
  auto cfg = small_config(4, 2, 16);
  cfg.offset_scale = 0;
  cfg.potency_min = cfg.potency_max = 1.0;
  const Universe u = generate_universe(cfg, 5);
  const CompoundSpec* a = nullptr;
  const CompoundSpec* b = nullptr;
  for (const auto& c : u.compounds) {
    for (const auto& o : u.compounds) {
      if (&c != &o && c.target_id == o.target_id && c.mode == o.mode) {
        a = &c;
        b = &o;
        break;
      }
    }
    if (a) break;
  }
  REQUIRE(a != nullptr);
  const int n = 10000;
  const auto ctx = NuisanceContext::zero(cfg.d_feat);
  const Vector ma = simulate_cells(u, {PertType::compound, a->compound_id}, ctx, n, 1).colwise().mean();
  const Vector mb = simulate_cells(u, {PertType::compound, b->compound_id}, ctx, n, 2).colwise().mean();
  // difference of two means has sd sigma*sqrt(2/n)
  const double tol = 3.0 * cfg.cell_noise * std::sqrt(2.0 / n);
  CHECK((ma - mb).cwiseAbs().maxCoeff() < tol * 1.5);
  const Vector ea = expected_phenotype(u, {PertType::compound, a->compound_id}, ctx);
  const Vector eb = expected_phenotype(u, {PertType::compound, b->compound_id}, ctx);
  CHECK((ea - eb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("simulate_cells: cell mean matches the nuisance-scaled expectation") {
  const Universe u = generate_universe(small_config(4, 2, 8), 21);
  const int d = u.config.d_feat;
  NuisanceContext ctx;
  ctx.additive = Vector::LinSpaced(d, -1.0, 1.0);
  ctx.log_gain = Vector::Constant(d, 0.2);
  const int n = 20000;
  const Vector mean = simulate_cells(u, {PertType::compound, 2}, ctx, n, 4).colwise().mean();
  const auto& c = u.compounds[2];
  const Vector expected = ((u.control_mean + c.potency * (u.latent_to_feature * c.effect) + ctx.additive).array() *
                           std::exp(0.2))
                              .matrix();
  const double sd = u.config.cell_noise * std::exp(0.2);
  CHECK((mean - expected).cwiseAbs().maxCoeff() < 4.5 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("effect magnitude grows strictly with potency") {
  auto cfg = small_config(4, 2, 8);
  cfg.cell_noise = 0;
  Universe u = generate_universe(cfg, 2);
  NuisanceContext ctx = NuisanceContext::zero(cfg.d_feat);
  ctx.log_gain.setConstant(0.1);
  const Vector control = expected_phenotype(u, {PertType::control, 0}, ctx);
  double last = -1;
  for (int k = 1; k <= 10; ++k) {
    u.compounds[0].potency = 0.25 * k;
    const double dist = (simulate_cells(u, {PertType::compound, 0}, ctx, 1, 0).row(0).transpose() - control).norm();
    CHECK(dist > last);
    last = dist;
  }
}

TEST_CASE("assemble_dataset: well counts") {
  const Universe u = generate_universe(small_config(5, 5, 10), 4);
  SplitPlan plan;
  plan.n_arena_compounds = 4;
  plan.replicates = 5;
  plan.crispr_replicates = 0;
  const ArenaDataset d = assemble_dataset(u, plan, 9);
  int compound_wells = 0, controls = 0;
  std::map<int, int> per_plate_nonctrl, per_plate_ctrl;
  for (const auto& w : d.wells) {
    if (w.pert_type == PertType::compound) ++compound_wells, ++per_plate_nonctrl[w.plate];
    if (w.pert_type == PertType::control) ++controls, ++per_plate_ctrl[w.plate];
  }
  CHECK(compound_wells == 50);
  for (const auto& [p, n] : per_plate_nonctrl) {
    CHECK(per_plate_ctrl[p] == static_cast<int>(std::ceil(n / 9.0 - 1e-9)));
  }
  CHECK(controls > 0);
  validate_dataset(d);
}

TEST_CASE("assemble_dataset: no OOD compounds leaves the pool empty") {
  const Universe u = generate_universe(small_config(4, 2, 8), 4);
  SplitPlan plan;
  plan.n_arena_compounds = 8;
  const ArenaDataset d = assemble_dataset(u, plan, 1);
  CHECK(d.ood_pool.empty());
  CHECK(d.arena_compounds.size() == 8);
}

TEST_CASE("assemble_dataset: balanced plates") {
  const Universe u = generate_universe(small_config(10, 10, 100), 4);
  SplitPlan plan;
  plan.n_arena_compounds = 20;
  plan.replicates = 5;
  plan.n_plates = 4;
  const ArenaDataset d = assemble_dataset(u, plan, 3);
  std::map<int, int> arena_per_plate, compound_per_plate;
  for (const auto& w : d.wells) {
    if (w.pert_type != PertType::compound) continue;
    compound_per_plate[w.plate] += 1;
    if (d.is_arena_compound(w.pert_id)) arena_per_plate[w.plate] += 1;
  }
  REQUIRE(arena_per_plate.size() == 4);
  for (const auto& [p, n] : arena_per_plate) CHECK(n == 25);
  for (const auto& [p, n] : compound_per_plate) CHECK(n == 125);
  // replicates of one compound land on distinct plates
  std::map<int, std::set<int>> plates_of;
  for (const auto& w : d.wells)
    if (w.pert_type == PertType::compound) plates_of[w.pert_id].insert(w.plate);
  for (const auto& [c, plates] : plates_of) CHECK(plates.size() == 4);
}

TEST_CASE("assemble_dataset: infeasible plans are configuration errors") {
  const Universe u = generate_universe(small_config(4, 2, 8), 4);
  SplitPlan plan;
  plan.n_arena_compounds = 9;
  CHECK_THROWS_AS(assemble_dataset(u, plan, 1), ConfigError);
  plan.n_arena_compounds = 2;
  plan.replicates = 0;
  CHECK_THROWS_AS(assemble_dataset(u, plan, 1), ConfigError);
}

TEST_CASE("assemble_dataset: invariants, labels and determinism") {
  const Universe u = generate_universe(small_config(6, 3, 30), 8);
  SplitPlan plan;
  plan.n_arena_compounds = 10;
  const ArenaDataset a = assemble_dataset(u, plan, 5);
  const ArenaDataset b = assemble_dataset(u, plan, 5);
  validate_dataset(a);
  CHECK(csv_bytes(a) == csv_bytes(b));
  CHECK(csv_bytes(a) != csv_bytes(assemble_dataset(u, plan, 6)));

  for (const auto& c : u.compounds) {
    CHECK(a.labels.at(c.compound_id).moa_id == c.moa_id);
    CHECK(a.labels.at(c.compound_id).target_id == c.target_id);
  }
  for (int c : a.ood_pool) CHECK_FALSE(a.is_arena_compound(c));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& w = a.wells[i];
    if (a.is_holdout(i) && w.pert_type == PertType::compound) {
      CHECK(a.is_arena_compound(w.pert_id));
      CHECK(w.replicate_index >= plan.replicates - plan.holdout_replicates);
    }
    if (w.pert_type == PertType::crispr) CHECK(a.is_holdout(i));
    if (w.pert_type == PertType::compound && !a.is_arena_compound(w.pert_id)) CHECK_FALSE(a.is_holdout(i));
  }
}

TEST_CASE("subsample_view") {
  const Universe u = generate_universe(small_config(6, 3, 30), 8);
  SplitPlan plan;
  plan.n_arena_compounds = 10;
  auto data = std::make_shared<const ArenaDataset>(assemble_dataset(u, plan, 5));
  const int pool = static_cast<int>(data->ood_pool.size());

  SUBCASE("full fraction and pool is the identity") {
    const DatasetView v = subsample_view(data, pool, 1.0, 3);
    CHECK(v.wells == full_view(data).wells);
  }
  SUBCASE("fraction 0.2 of five replicates keeps one well per OOD compound") {
    const DatasetView v = subsample_view(data, pool, 0.2, 3);
    std::map<int, int> per_compound;
    for (int i : v.train_wells())
      if (data->wells[i].pert_type == PertType::compound) per_compound[data->wells[i].pert_id] += 1;
    for (int c : data->ood_pool) CHECK(per_compound[c] == 1);
    // arena compounds keep ceil(0.2 * 3) of their three train wells
    for (int c : data->arena_compounds) CHECK(per_compound[c] == 1);
  }
  SUBCASE("OOD selection size and determinism") {
    const DatasetView v = subsample_view(data, 7, 0.6, 11);
    const DatasetView w = subsample_view(data, 7, 0.6, 11);
    CHECK(v.wells == w.wells);
    CHECK(v.ood_selected.size() == 7);
    std::set<int> compounds;
    for (int i : v.train_wells())
      if (data->wells[i].pert_type == PertType::compound && !data->is_arena_compound(data->wells[i].pert_id))
        compounds.insert(data->wells[i].pert_id);
    CHECK(compounds.size() == 7);
    CHECK(v.wells != subsample_view(data, 7, 0.6, 12).wells);
  }
  SUBCASE("holdout wells are untouched and never in the train stream") {
    const DatasetView v = subsample_view(data, 3, 0.2, 1);
    const auto full = full_view(data).holdout_wells();
    CHECK(v.holdout_wells() == full);
    const auto train = v.train_wells();
    for (int i : train) CHECK_FALSE(data->is_holdout(static_cast<std::size_t>(i)));
  }
  SUBCASE("range errors") {
    CHECK_THROWS_AS(subsample_view(data, pool + 1, 1.0, 1), RangeError);
    CHECK_THROWS_AS(subsample_view(data, 1, 0.0, 1), RangeError);
    CHECK_THROWS_AS(subsample_view(data, 1, 1.5, 1), RangeError);
  }
}

TEST_CASE("ceil_fraction avoids floating-point overshoot") {
  CHECK(ceil_fraction(0.6, 5) == 3);
  CHECK(ceil_fraction(0.2, 5) == 1);
  CHECK(ceil_fraction(0.01, 5) == 1);
  CHECK(ceil_fraction(0.75, 4) == 3);
  CHECK(ceil_fraction(1.0, 5) == 5);
}
