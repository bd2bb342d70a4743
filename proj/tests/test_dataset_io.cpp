#include "pheno/dataset_io.hpp"
#include "pheno/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using namespace pheno;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pheno_io_" + name);
  fs::remove_all(p);
  return p;
}

ArenaDataset sample_dataset() {
  UniverseConfig cfg;
  cfg.n_targets = 4;
  cfg.n_moas = 2;
  cfg.n_compounds = 12;
  cfg.d_feat = 6;
  cfg.d_latent = 3;
  SplitPlan plan;
  plan.n_arena_compounds = 4;
  plan.replicates = 3;
  plan.holdout_replicates = 1;
  return assemble_dataset(generate_universe(cfg, 2), plan, 3);
}

}  // namespace

TEST_CASE("dataset directory round trip is exact") {
  const ArenaDataset d = sample_dataset();
  const auto dir = fresh_dir("roundtrip");
  write_dataset(d, dir.string());
  const ArenaDataset r = read_dataset(dir.string());
  REQUIRE(r.size() == d.size());
  CHECK(r.d_feat == d.d_feat);
  CHECK(r.arena_compounds == d.arena_compounds);
  CHECK(r.ood_pool == d.ood_pool);
  CHECK(r.split == d.split);
  CHECK(r.crispr_genes == d.crispr_genes);
  CHECK(r.plate_rows == d.plate_rows);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.wells[i].features == d.wells[i].features);
    CHECK(r.wells[i].pert_type == d.wells[i].pert_type);
    CHECK(r.wells[i].pert_id == d.wells[i].pert_id);
  }
  for (const auto& [id, l] : d.labels) {
    CHECK(r.labels.at(id).moa_id == l.moa_id);
    CHECK(r.labels.at(id).target_id == l.target_id);
  }
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, -1e-300, 3.141592653589793, 1.0 / 3.0, 123456789.125}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("schema errors name the file and line") {
  const ArenaDataset d = sample_dataset();
  const auto dir = fresh_dir("broken");
  write_dataset(d, dir.string());
  const auto csv = dir / "wells.csv";

  SUBCASE("bad number") {
    std::ifstream in(csv);
    std::string header, first, rest, line;
    std::getline(in, header);
    std::getline(in, first);
    while (std::getline(in, line)) rest += line + "\n";
    in.close();
    first.replace(first.rfind(',') + 1, std::string::npos, "abc");
    std::ofstream(csv) << header << "\n" << first << "\n" << rest;
    try {
      read_dataset(dir.string());
      FAIL("expected an InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("wells.csv:2") != std::string::npos);
      CHECK(e.exit_code() == 3);
    }
  }
  SUBCASE("missing column") {
    std::ofstream(csv) << "well_id,plate,batch\n0,0,0\n";
    CHECK_THROWS_AS(read_dataset(dir.string()), InputError);
  }
  SUBCASE("missing labels") {
    fs::remove(dir / "labels.json");
    CHECK_THROWS_AS(read_dataset(dir.string()), InputError);
  }
}

TEST_CASE("directories without a manifest are ingested as all-train") {
  const ArenaDataset d = sample_dataset();
  const auto dir = fresh_dir("nomanifest");
  write_dataset(d, dir.string());
  fs::remove(dir / "manifest.json");
  const ArenaDataset r = read_dataset(dir.string());
  for (auto s : r.split) CHECK(s == Split::train);
  CHECK(r.arena_compounds.size() == d.labels.size());
  CHECK(r.n_plates == d.n_plates);
}
