#include "pheno/report.hpp"
#include "pheno/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace pheno;
namespace fs = std::filesystem;

namespace {

std::vector<RunRecord> synthetic_records() {
  std::vector<RunRecord> out;
  Rng r(1, "test/report");
  for (Supervision sup : {Supervision::ibp, Supervision::task})
    for (int ood : {0, 10, 20})
      for (std::uint64_t seed : {0, 1, 2}) {
        RunRecord rec;
        rec.config.supervision = sup;
        rec.config.ood_count = ood;
        rec.config.seed = seed;
        rec.fingerprint = fingerprint(rec.config);
        rec.status = RunStatus::done;
        const double base = sup == Supervision::ibp ? 0.4 + 0.01 * ood : 0.3;
        rec.metrics = {{"topk", base + 0.02 * r.uniform()}, {"cce", 2.0}, {"chance", 0.25}, {"ood_wells", 5.0 * ood}};
        out.push_back(rec);
      }
  RunRecord failed;
  failed.config.depth = 9;
  failed.fingerprint = fingerprint(failed.config);
  failed.status = RunStatus::failed;
  failed.cause = "diverged";
  out.push_back(failed);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Table& table(const ReportBundle& b, const std::string& name) {
  for (const auto& t : b.tables)
    if (t.name == name) return t;
  FAIL("missing table " << name);
  throw;
}

}  // namespace

TEST_CASE("render_table writes a TSV header and rows") {
  const Table t{"x", {"a", "b"}, {{"1", "2"}, {"3", "4"}}};
  CHECK(render_table(t) == "a\tb\n1\t2\n3\t4\n");
}

TEST_CASE("render_svg produces a standalone document") {
  Plot p{"Title & more", "x", "y", {{"s1", {{0, 1}, {1, 2}, {2, 4}}}, {"s2", {{0, 0}, {2, 1}}}}, false};
  const std::string svg = render_svg(p);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("Title &amp; more") != std::string::npos);
  p.scatter = true;
  const std::string scatter = render_svg(p);
  CHECK(scatter.find("<polyline") == std::string::npos);
  CHECK(scatter.find("<circle") != std::string::npos);
  CHECK(render_svg(Plot{"empty", "x", "y", {}, false}).find("</svg>") != std::string::npos);
}

TEST_CASE("provenance ids ignore fingerprint order") {
  CHECK(provenance_id({"b", "a"}) == provenance_id({"a", "b"}));
  CHECK(provenance_id({"a"}) != provenance_id({"a", "b"}));
  CHECK(provenance_id({"a"}).rfind("set:", 0) == 0);
}

TEST_CASE("an empty store gives a valid report with a warning") {
  const ReportBundle b = build_report({});
  CHECK(!b.warnings.empty());
  CHECK(table(b, "runs").rows.empty());
  const fs::path dir = fs::temp_directory_path() / "pheno_test_empty_report";
  fs::remove_all(dir);
  write_report(b, dir.string());
  CHECK(fs::exists(dir / "provenance.json"));
  CHECK(fs::exists(dir / "runs.tsv"));
  fs::remove_all(dir);
}

TEST_CASE("every reported number resolves to stored records") {
  const auto records = synthetic_records();
  std::set<std::string> fps;
  for (const auto& r : records) fps.insert(r.fingerprint);
  const ReportBundle b = build_report(records);
  CHECK(table(b, "runs").rows.size() == records.size());
  int cited = 0;
  for (const auto& t : b.tables) {
    const auto col = std::find(t.columns.begin(), t.columns.end(), "provenance");
    if (col == t.columns.end()) continue;
    const auto k = static_cast<std::size_t>(col - t.columns.begin());
    for (const auto& row : t.rows) {
      REQUIRE(b.provenance.count(row[k]) == 1);
      for (const auto& fp : b.provenance.at(row[k])) CHECK(fps.count(fp) == 1);
      ++cited;
    }
  }
  CHECK(cited > 0);
  CHECK(table(b, "ttests").rows.size() == 1);
  CHECK(table(b, "scaling").rows.size() >= 1);
  CHECK(b.metadata.at("tool_version") == kToolVersion);
}

TEST_CASE("reports are byte-identical across reruns and record order") {
  auto records = synthetic_records();
  const fs::path a = fs::temp_directory_path() / "pheno_test_report_a";
  const fs::path c = fs::temp_directory_path() / "pheno_test_report_b";
  fs::remove_all(a);
  fs::remove_all(c);
  write_report(build_report(records), a.string());
  Rng(4, "test/report-order").shuffle(records);
  write_report(build_report(records), c.string());
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = c / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++files;
  }
  CHECK(files >= 7);
  fs::remove_all(a);
  fs::remove_all(c);
}
