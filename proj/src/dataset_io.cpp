#include "pheno/dataset_io.hpp"

#include "pheno/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace pheno {

namespace {

constexpr const char* kFixedColumns[] = {"well_id", "plate", "batch", "source", "row",
                                         "col", "pert_type", "pert_id", "replicate_index"};
constexpr std::size_t kNumFixed = std::size(kFixedColumns);

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw InputError(where + ": cannot parse '" + std::string(s) + "'");
  return v;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_wells_csv(const ArenaDataset& d, const std::string& path) {
  std::string out;
  for (std::size_t k = 0; k < kNumFixed; ++k) out += std::string(k ? "," : "") + kFixedColumns[k];
  for (int j = 0; j < d.d_feat; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const auto& w : d.wells) {
    out += std::to_string(w.well_id) + ',' + std::to_string(w.plate) + ',' + std::to_string(w.batch) + ',' +
           std::to_string(w.source) + ',' + std::to_string(w.row) + ',' + std::to_string(w.col) + ',' +
           to_string(w.pert_type) + ',' + std::to_string(w.pert_id) + ',' + std::to_string(w.replicate_index);
    for (Eigen::Index j = 0; j < w.features.size(); ++j) out += ',' + format_double(w.features(j));
    out += '\n';
  }
  write_text(path, out);
}

void write_dataset(const ArenaDataset& d, const std::string& dir) {
  fs::create_directories(dir);
  write_wells_csv(d, (fs::path(dir) / "wells.csv").string());

  nlohmann::ordered_json labels;
  labels["schema_version"] = 1;
  labels["kind"] = "labels";
  labels["compounds"] = nlohmann::ordered_json::object();
  for (const auto& [id, l] : d.labels)
    labels["compounds"][std::to_string(id)] = {{"moa_id", l.moa_id}, {"target_id", l.target_id}};
  labels["crispr"] = nlohmann::ordered_json::object();
  for (const auto& [id, g] : d.crispr_genes) labels["crispr"][std::to_string(id)] = {{"target_id", g}};
  write_text(fs::path(dir) / "labels.json", labels.dump(1) + "\n");

  nlohmann::ordered_json m;
  m["schema_version"] = 1;
  m["kind"] = "arena_manifest";
  m["d_feat"] = d.d_feat;
  m["replicates"] = d.replicates;
  m["n_plates"] = d.n_plates;
  m["n_batches"] = d.n_batches;
  m["n_sources"] = d.n_sources;
  m["plate_rows"] = d.plate_rows;
  m["plate_cols"] = d.plate_cols;
  m["arena_compounds"] = d.arena_compounds;
  m["ood_pool"] = d.ood_pool;
  std::vector<int> held;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.is_holdout(i)) held.push_back(d.wells[i].well_id);
  m["holdout_well_ids"] = held;
  write_text(fs::path(dir) / "manifest.json", m.dump(1) + "\n");
}

ArenaDataset read_dataset(const std::string& dir) {
  const fs::path csv = fs::path(dir) / "wells.csv";
  std::ifstream in(csv);
  if (!in) throw InputError("cannot open " + csv.string());

  ArenaDataset d;
  std::string line;
  if (!std::getline(in, line)) throw InputError(csv.string() + ":1: missing header");
  const auto header = split_csv(line);
  if (header.size() < kNumFixed + 1) throw InputError(csv.string() + ":1: expected at least one feature column");
  for (std::size_t k = 0; k < kNumFixed; ++k) {
    if (header[k] != kFixedColumns[k])
      throw InputError(csv.string() + ":1: column " + std::to_string(k) + " must be '" + kFixedColumns[k] +
                       "', found '" + std::string(header[k]) + "'");
  }
  for (std::size_t k = kNumFixed; k < header.size(); ++k) {
    if (header[k] != "f" + std::to_string(k - kNumFixed))
      throw InputError(csv.string() + ":1: unexpected column '" + std::string(header[k]) + "'");
  }
  d.d_feat = static_cast<int>(header.size() - kNumFixed);

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    WellRecord w;
    w.well_id = parse_number<int>(cells[0], where);
    w.plate = parse_number<int>(cells[1], where);
    w.batch = parse_number<int>(cells[2], where);
    w.source = parse_number<int>(cells[3], where);
    w.row = parse_number<int>(cells[4], where);
    w.col = parse_number<int>(cells[5], where);
    try {
      w.pert_type = pert_type_from_string(std::string(cells[6]));
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    w.pert_id = parse_number<int>(cells[7], where);
    w.replicate_index = parse_number<int>(cells[8], where);
    w.features.resize(d.d_feat);
    for (int j = 0; j < d.d_feat; ++j) w.features(j) = parse_number<double>(cells[kNumFixed + j], where);
    d.wells.push_back(std::move(w));
  }

  const auto labels = read_json(fs::path(dir) / "labels.json");
  try {
    if (labels.at("kind") != "labels" || labels.at("schema_version") != 1)
      throw InputError(dir + "/labels.json: not a version-1 labels file");
    for (const auto& [k, v] : labels.at("compounds").items())
      d.labels[std::stoi(k)] = CompoundLabel{v.at("moa_id").get<int>(), v.at("target_id").get<int>()};
    if (labels.contains("crispr"))
      for (const auto& [k, v] : labels.at("crispr").items()) d.crispr_genes[std::stoi(k)] = v.at("target_id").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(dir + "/labels.json: " + e.what());
  }

  d.split.assign(d.wells.size(), Split::train);
  const fs::path manifest = fs::path(dir) / "manifest.json";
  int max_plate = 0, max_batch = 0, max_source = 0, max_row = 0, max_col = 0, max_rep = 0;
  for (const auto& w : d.wells) {
    max_plate = std::max(max_plate, w.plate);
    max_batch = std::max(max_batch, w.batch);
    max_source = std::max(max_source, w.source);
    max_row = std::max(max_row, w.row);
    max_col = std::max(max_col, w.col);
    max_rep = std::max(max_rep, w.replicate_index);
  }
  if (fs::exists(manifest)) {
    const auto m = read_json(manifest);
    try {
      if (m.at("kind") != "arena_manifest" || m.at("schema_version") != 1)
        throw InputError(manifest.string() + ": not a version-1 manifest");
      if (m.at("d_feat").get<int>() != d.d_feat)
        throw InputError(manifest.string() + ": d_feat disagrees with wells.csv");
      d.replicates = m.at("replicates");
      d.n_plates = m.at("n_plates");
      d.n_batches = m.at("n_batches");
      d.n_sources = m.at("n_sources");
      d.plate_rows = m.at("plate_rows");
      d.plate_cols = m.at("plate_cols");
      d.arena_compounds = m.at("arena_compounds").get<std::vector<int>>();
      d.ood_pool = m.at("ood_pool").get<std::vector<int>>();
      const auto held = m.at("holdout_well_ids").get<std::vector<int>>();
      const std::set<int> held_set(held.begin(), held.end());
      for (std::size_t i = 0; i < d.size(); ++i)
        if (held_set.contains(d.wells[i].well_id)) d.split[i] = Split::arena_holdout;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(manifest.string() + ": " + e.what());
    }
  } else {
    d.replicates = max_rep + 1;
    d.n_plates = max_plate + 1;
    d.n_batches = max_batch + 1;
    d.n_sources = max_source + 1;
    d.plate_rows = max_row + 1;
    d.plate_cols = max_col + 1;
    for (const auto& [id, l] : d.labels) d.arena_compounds.push_back(id);
  }
  std::sort(d.arena_compounds.begin(), d.arena_compounds.end());
  std::sort(d.ood_pool.begin(), d.ood_pool.end());
  if (max_plate >= d.n_plates || max_batch >= d.n_batches || max_source >= d.n_sources || max_row >= d.plate_rows ||
      max_col >= d.plate_cols)
    throw InputError(dir + ": well coordinates exceed the manifest's plate geometry");
  validate_dataset(d);
  return d;
}

}  // namespace pheno
