#pragma once

#include "pheno/arena_synth.hpp"
#include "pheno/train_protocols.hpp"
#include "pheno/zoo_runner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pheno {

inline constexpr int kConfigSchemaVersion = 1;

// Config files are JSON objects with "schema_version" and "kind". Every
// section is optional and falls back to the defaults; unknown keys raise
// ConfigError naming the file and key.

struct SynthConfig {
  UniverseConfig universe;
  SplitPlan split;
};

SynthConfig parse_synth_config(const std::string& text, const std::string& where);
SynthConfig load_synth_config(const std::string& path);

struct ZooConfig {
  GridAxes axes;
  /// Fractions of the OOD pool; resolved against a dataset by resolve_axes.
  std::optional<std::vector<double>> ood_fractions;
  TrainConfig train;
};

ZooConfig parse_zoo_config(const std::string& text, const std::string& where);
ZooConfig load_zoo_config(const std::string& path);

/// Axes with OOD fractions turned into counts for a pool of this size.
GridAxes resolve_axes(const ZooConfig& cfg, int ood_pool_size);

}  // namespace pheno
