#pragma once

// Seeded synthetic benchmark, the four-row module ablation and the
// neighbourhood-scale sweep, plus their CSV / table reports.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "schedgraph/gradcheck.hpp"
#include "schedgraph/metrics.hpp"
#include "schedgraph/model.hpp"
#include "schedgraph/trainer.hpp"
#include "schedgraph/workload.hpp"

namespace schedgraph {

struct BenchmarkConfig {
  std::size_t n_tasks = 500;  // split evenly over n_traces
  std::size_t n_nodes = 4;
  std::size_t n_traces = 5;
  std::size_t n_val_traces = 1;
  double mean_interarrival = 1.25;
  // Each kind gets one window of this fraction of the trace span, at a
  // seeded, non-overlapping position.
  double disturbance_span = 0.15;
  double magnitude = 1.0;
  double affected_fraction = 1.0;
  std::vector<DisturbanceKind> kinds{DisturbanceKind::kStructuralShift, DisturbanceKind::kResourceChange,
                                     DisturbanceKind::kTaskDelay};
};

void validate(const BenchmarkConfig& config);

struct BenchmarkData {
  std::vector<ScheduleTrace> train;
  std::vector<ScheduleTrace> val;
};

// Task ids are unique across all traces of one benchmark.
BenchmarkData make_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

struct ExperimentConfig {
  BenchmarkConfig bench;
  GraphConfig graph;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> k_values{1, 2, 3, 4, 5};
  double threshold = 0.5;
  std::size_t jobs = 1;
};

void validate(const ExperimentConfig& config);

enum class AblationRow { kBaseline, kGsg, kMsgsa, kAll };
inline constexpr AblationRow kAblationRows[] = {AblationRow::kBaseline, AblationRow::kGsg, AblationRow::kMsgsa,
                                                AblationRow::kAll};

std::string_view row_name(AblationRow row);

// Switches modules and their auxiliary losses on or off. Baseline: uniform
// edge weights, one 1-hop scale, no residual, no auxiliary losses.
void apply_row(AblationRow row, ModelConfig& model, LossWeights& loss);

struct CellResult {
  std::string run_id;
  std::string row_or_k;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double wall_seconds = 0.0;
};

// Builds the dataset for one (model, seed) cell, trains and validates.
CellResult run_cell(const BenchmarkData& data, const GraphConfig& graph, const ModelConfig& model,
                    TrainConfig train, std::uint64_t seed, double threshold);

// One cell per (row, seed); rows in table order, seeds in config order.
std::vector<CellResult> run_ablation(const ExperimentConfig& config);

// One cell per (k, seed) with scales 1..k hops plus global, both modules on.
std::vector<CellResult> neighborhood_sweep(const ExperimentConfig& config);

// Full model, one cell per seed.
std::vector<CellResult> run_evaluate(const ExperimentConfig& config);

// Seeded 10-task trace cut into exactly two overlapping slices, with every
// other task labelled anomalous. The window settings that produce the two
// slices are written into `graph`.
ScheduleTrace gradcheck_trace(std::uint64_t seed, GraphConfig& graph);

// check_gradients over the summed total loss of every slice of
// gradcheck_trace(seed), dropout off.
GradCheckReport model_gradcheck(GraphConfig graph, const ModelConfig& model, const LossWeights& loss,
                                std::uint64_t seed, double epsilon = 1e-5, double tolerance = 1e-4);

struct MetricSpread {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

struct RowSummary {
  std::string row_or_k;
  std::size_t n = 0;
  MetricSpread precision, recall, f1, auc;
};

// Groups cells by row_or_k, in first-appearance order.
std::vector<RowSummary> summarize(const std::vector<CellResult>& cells);

void write_results_csv(const std::vector<CellResult>& cells, std::ostream& out);
void write_plot_csv(const std::vector<RowSummary>& rows, std::ostream& out);
void print_summary(const std::vector<RowSummary>& rows, std::ostream& out);

}  // namespace schedgraph
