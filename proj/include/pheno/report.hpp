#pragma once

#include "pheno/zoo_runner.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pheno {

inline constexpr const char* kToolVersion = "0.1.0";

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Tab-separated text with a header line.
std::string render_table(const Table& t);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool scatter = false;  // markers only, no polyline
};

/// Standalone SVG document with axes, ticks, series and a legend.
std::string render_svg(const Plot& p);

struct ReportBundle {
  std::vector<Table> tables;
  std::vector<std::pair<std::string, Plot>> plots;  // file stem -> plot
  /// Provenance id -> record fingerprints it was computed from.
  std::map<std::string, std::vector<std::string>> provenance;
  std::map<std::string, std::string> metadata;  // tool version, seeds, hashes
  std::vector<std::string> warnings;
};

/// Provenance id of a set of records: "set:" + hash of the sorted fingerprints.
std::string provenance_id(std::vector<std::string> fingerprints);

/// Tables of runs, frontiers, per-task bests, chance baselines, regime
/// t-tests and scaling fits, plus scaling and discovery plots. When a
/// dataset is given, a 2-D embedding of its arena holdout wells is added.
ReportBundle build_report(const std::vector<RunRecord>& records, const ArenaDataset* dataset = nullptr);

/// Writes <name>.tsv per table, <stem>.svg per plot and provenance.json.
void write_report(const ReportBundle& bundle, const std::string& out_dir);

}  // namespace pheno
