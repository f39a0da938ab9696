#pragma once

// The single JSON run configuration shared by every CLI command.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "schedgraph/experiments.hpp"
#include "schedgraph/model.hpp"
#include "schedgraph/trainer.hpp"
#include "schedgraph/workload.hpp"

namespace schedgraph {

inline constexpr int kConfigSchema = 1;

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  GenConfig generate;
  std::vector<DisturbanceSpec> disturbances;
  GraphConfig graph;
  ModelConfig model;
  TrainConfig train;
  double val_fraction = 0.2;  // temporal holdout when no validation trace is given
  BenchmarkConfig bench;
  std::size_t n_seeds = 5;
  std::vector<int> k_values{1, 2, 3, 4, 5};
  double threshold = 0.5;

  // Root seed fans out to every subsystem.
  void set_seed(std::uint64_t root);
  ExperimentConfig experiment(std::size_t jobs) const;
};

// Strict: "schema" must equal kConfigSchema, unknown keys and type mismatches
// throw ValidationError naming the key path (e.g. "train.epochs").
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

void validate(const RunConfig& config);

}  // namespace schedgraph
