#pragma once

#include "pheno/arena_synth.hpp"

#include <string>

namespace pheno {

// On-disk layout of a dataset directory:
//   wells.csv      well_id,plate,batch,source,row,col,pert_type,pert_id,replicate_index,f0..f{d-1}
//   labels.json    compound_id -> {moa_id, target_id}; crispr pert_id -> {target_id}
//   manifest.json  split (holdout well ids), arena compounds, OOD pool, plate geometry
// A directory without manifest.json is ingested with every well in train and
// every labelled compound in the arena.

void write_wells_csv(const ArenaDataset& d, const std::string& path);
void write_dataset(const ArenaDataset& d, const std::string& dir);
ArenaDataset read_dataset(const std::string& dir);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

}  // namespace pheno
