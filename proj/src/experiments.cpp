#include "schedgraph/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <ostream>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "schedgraph/error.hpp"
#include "schedgraph/rng.hpp"

namespace schedgraph {

void validate(const BenchmarkConfig& c) {
  if (c.n_traces < 2) throw ValidationError("benchmark.n_traces must be >= 2");
  if (c.n_val_traces < 1 || c.n_val_traces >= c.n_traces)
    throw ValidationError("benchmark.n_val_traces must be in [1, n_traces)");
  if (c.n_tasks < c.n_traces) throw ValidationError("benchmark.n_tasks must be >= n_traces");
  if (c.n_nodes < 1) throw ValidationError("benchmark.n_nodes must be >= 1");
  if (!(c.mean_interarrival > 0.0)) throw ValidationError("benchmark.mean_interarrival must be > 0");
  if (!(c.disturbance_span > 0.0) || c.disturbance_span * static_cast<double>(c.kinds.size()) > 1.0)
    throw ValidationError("benchmark.disturbance_span must be > 0 and fit every kind into the trace");
  if (!(c.magnitude > 0.0)) throw ValidationError("benchmark.magnitude must be > 0");
  if (!(c.affected_fraction > 0.0 && c.affected_fraction <= 1.0))
    throw ValidationError("benchmark.affected_fraction must be in (0, 1]");
}

BenchmarkData make_benchmark(const BenchmarkConfig& c, std::uint64_t seed) {
  validate(c);
  BenchmarkData data;
  const std::size_t per_trace = c.n_tasks / c.n_traces;
  for (std::size_t i = 0; i < c.n_traces; ++i) {
    GenConfig g;
    g.n_tasks = per_trace + (i < c.n_tasks % c.n_traces ? 1 : 0);
    g.n_nodes = c.n_nodes;
    g.mean_interarrival = c.mean_interarrival;
    g.seed = derive_seed(seed, SeedStream::kGenerate, i);
    g.task_id_offset = static_cast<std::int64_t>(i * (per_trace + 1));
    ScheduleTrace trace = generate_trace(g);
    // Disturbance windows are laid out over the realised submit span.
    const double span = trace.last_submit();
    g.horizon = std::max(span, c.mean_interarrival);
    trace.horizon = g.horizon;

    Rng rng(derive_seed(seed, SeedStream::kInject, i));
    std::vector<std::size_t> slot(c.kinds.size());
    for (std::size_t k = 0; k < slot.size(); ++k) slot[k] = k;
    std::shuffle(slot.begin(), slot.end(), rng);
    const double width = c.disturbance_span * g.horizon;
    const double cell = g.horizon / static_cast<double>(c.kinds.size());
    std::uniform_real_distribution<double> jitter(0.0, std::max(0.0, cell - width));
    for (std::size_t k = 0; k < c.kinds.size(); ++k) {
      DisturbanceSpec d;
      d.kind = c.kinds[k];
      d.onset = std::min(static_cast<double>(slot[k]) * cell + jitter(rng), g.horizon - width);
      d.duration = width;
      d.magnitude = c.magnitude;
      d.affected_fraction = c.affected_fraction;
      trace = inject_disturbance(trace, d, derive_seed(seed, SeedStream::kInject, 1000 + i * 16 + k));
    }
    (i + c.n_val_traces < c.n_traces ? data.train : data.val).push_back(std::move(trace));
  }
  return data;
}

void validate(const ExperimentConfig& c) {
  validate(c.bench);
  validate(c.graph);
  validate(c.model);
  validate(c.train);
  if (c.seeds.empty()) throw ValidationError("eval.seeds must not be empty");
  if (c.k_values.empty()) throw ValidationError("eval.k_values must not be empty");
  for (int k : c.k_values)
    if (k < 1) throw ValidationError("eval.k_values entries must be >= 1");
  if (c.jobs < 1) throw ValidationError("--jobs must be >= 1");
}

std::string_view row_name(AblationRow row) {
  switch (row) {
    case AblationRow::kBaseline: return "Baseline";
    case AblationRow::kGsg: return "+GSG-SGC";
    case AblationRow::kMsgsa: return "+MS-GSA";
    case AblationRow::kAll: return "+All";
  }
  return "?";
}

void apply_row(AblationRow row, ModelConfig& model, LossWeights& loss) {
  model.use_gsg = row == AblationRow::kGsg || row == AblationRow::kAll;
  model.use_msgsa = row == AblationRow::kMsgsa || row == AblationRow::kAll;
  if (!model.use_gsg) loss.lambda1 = loss.lambda2 = 0.0;
  if (!model.use_msgsa) loss.gamma1 = loss.gamma2 = 0.0;
}

CellResult run_cell(const BenchmarkData& data, const GraphConfig& graph, const ModelConfig& model,
                    TrainConfig train, std::uint64_t seed, double threshold) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = make_dataset(data.train, data.val, graph, model);
  if (ds.val.empty()) throw ValidationError("benchmark validation split has no slices");
  train.seed = seed;
  TrainResult r = schedgraph::train(ds, model, train);
  CellResult cell;
  cell.seed = seed;
  cell.metrics = evaluate(r.params, ds, ds.val, model, threshold);
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

namespace {

// Runs independent cells on `jobs` threads; results land by index so the
// output order never depends on scheduling.
std::vector<CellResult> run_cells(const std::vector<std::function<CellResult()>>& work, std::size_t jobs) {
  std::vector<CellResult> out(work.size());
  std::vector<std::exception_ptr> errors(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        out[i] = work[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(jobs, work.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <typename E>
E annotate(const E& e, const std::string& where) {
  return E(where + ": " + e.what());
}

CellResult labelled(const std::function<CellResult()>& fn, std::string run_id, std::string label) {
  try {
    CellResult c = fn();
    c.run_id = std::move(run_id);
    c.row_or_k = std::move(label);
    spdlog::info("{} {} seed {}: auc {:.4f} f1 {:.4f} ({:.1f}s)", c.run_id, c.row_or_k, c.seed, c.metrics.auc,
                 c.metrics.f1, c.wall_seconds);
    return c;
  } catch (const NumericError& e) {
    throw annotate(e, label);
  } catch (const ValidationError& e) {
    throw annotate(e, label);
  }
}

std::vector<BenchmarkData> benchmarks(const ExperimentConfig& c) {
  std::vector<BenchmarkData> out;
  for (auto s : c.seeds) out.push_back(make_benchmark(c.bench, s));
  return out;
}

}  // namespace

std::vector<CellResult> run_ablation(const ExperimentConfig& c) {
  validate(c);
  const auto data = benchmarks(c);
  std::vector<std::function<CellResult()>> work;
  for (AblationRow row : kAblationRows)
    for (std::size_t s = 0; s < c.seeds.size(); ++s)
      work.push_back([&c, &data, row, s] {
        ModelConfig model = c.model;
        TrainConfig train = c.train;
        apply_row(row, model, train.loss);
        return labelled([&] { return run_cell(data[s], c.graph, model, train, c.seeds[s], c.threshold); },
                        "ablation", std::string(row_name(row)));
      });
  return run_cells(work, c.jobs);
}

std::vector<CellResult> neighborhood_sweep(const ExperimentConfig& c) {
  validate(c);
  const auto data = benchmarks(c);
  std::vector<std::function<CellResult()>> work;
  for (int k : c.k_values)
    for (std::size_t s = 0; s < c.seeds.size(); ++s)
      work.push_back([&c, &data, k, s] {
        ModelConfig model = c.model;
        model.use_gsg = model.use_msgsa = true;
        model.scales = ScaleConfig::up_to(k);
        return labelled([&] { return run_cell(data[s], c.graph, model, c.train, c.seeds[s], c.threshold); },
                        "sweep", std::to_string(k));
      });
  return run_cells(work, c.jobs);
}

std::vector<CellResult> run_evaluate(const ExperimentConfig& c) {
  validate(c);
  const auto data = benchmarks(c);
  std::vector<std::function<CellResult()>> work;
  for (std::size_t s = 0; s < c.seeds.size(); ++s)
    work.push_back([&c, &data, s] {
      return labelled([&] { return run_cell(data[s], c.graph, c.model, c.train, c.seeds[s], c.threshold); },
                      "evaluate", "model");
    });
  return run_cells(work, c.jobs);
}

ScheduleTrace gradcheck_trace(std::uint64_t seed, GraphConfig& graph) {
  GenConfig g;
  g.n_tasks = 10;
  g.n_nodes = 2;
  g.mean_interarrival = 1.0;
  g.seed = derive_seed(seed, SeedStream::kGenerate);
  ScheduleTrace trace = generate_trace(g);
  for (std::size_t i = 0; i < trace.tasks.size(); i += 2) trace.tasks[i].anomaly_label = AnomalyLabel::kTaskDelay;
  // Slices [0, 0.8 L) and [0.6 L, 1.4 L) for L = last submit.
  const double last = trace.last_submit();
  graph.stride = 0.6 * last;
  graph.window_len = 0.8 * last;
  return trace;
}

GradCheckReport model_gradcheck(GraphConfig graph, const ModelConfig& model, const LossWeights& loss,
                                std::uint64_t seed, double epsilon, double tolerance) {
  const ScheduleTrace trace = gradcheck_trace(seed, graph);
  const GraphSequence seq = prepare_sequence(trace, graph, model);
  ParamStore params = init_params(model, derive_seed(seed, SeedStream::kParamInit));
  const LossFn fn = [&](Tape& tape, ParamStore& store) {
    Var total = tape.scalar(0.0);
    for (std::size_t t : seq.samples) {
      const ForwardPass fp = forward(tape, store, seq, t, model);
      total = add(total, total_loss(tape, fp, seq.slices[t], seq.fused[t], model, loss).total);
    }
    return total;
  };
  return check_gradients(fn, params, epsilon, tolerance);
}

namespace {

MetricSpread spread(const std::vector<double>& xs) {
  MetricSpread s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

std::vector<RowSummary> summarize(const std::vector<CellResult>& cells) {
  std::vector<std::string> order;
  for (const auto& c : cells)
    if (std::find(order.begin(), order.end(), c.row_or_k) == order.end()) order.push_back(c.row_or_k);
  std::vector<RowSummary> out;
  for (const auto& key : order) {
    std::vector<double> p, r, f, a;
    for (const auto& c : cells)
      if (c.row_or_k == key) {
        p.push_back(c.metrics.precision);
        r.push_back(c.metrics.recall);
        f.push_back(c.metrics.f1);
        a.push_back(c.metrics.auc);
      }
    out.push_back({key, p.size(), spread(p), spread(r), spread(f), spread(a)});
  }
  return out;
}

void write_results_csv(const std::vector<CellResult>& cells, std::ostream& out) {
  out << "run_id,row_or_k,seed,precision,recall,f1,auc,threshold,wall_seconds,best_f1_threshold\n";
  for (const auto& c : cells)
    out << fmt::format("{},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.3f},{:.10g}\n", c.run_id, c.row_or_k,
                       c.seed, c.metrics.precision, c.metrics.recall, c.metrics.f1, c.metrics.auc,
                       c.metrics.threshold, c.wall_seconds, c.metrics.best_f1_threshold);
}

void write_plot_csv(const std::vector<RowSummary>& rows, std::ostream& out) {
  out << "k,precision_mean,precision_sd,recall_mean,recall_sd,f1_mean,f1_sd,auc_mean,auc_sd\n";
  for (const auto& r : rows)
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.row_or_k,
                       r.precision.mean, r.precision.sd, r.recall.mean, r.recall.sd, r.f1.mean, r.f1.sd,
                       r.auc.mean, r.auc.sd);
}

void print_summary(const std::vector<RowSummary>& rows, std::ostream& out) {
  out << fmt::format("{:<10} {:>5} {:>16} {:>16} {:>16} {:>16}\n", "row", "n", "precision", "recall", "f1",
                     "auc");
  auto cell = [](const MetricSpread& m) { return fmt::format("{:.4f} +- {:.4f}", m.mean, m.sd); };
  for (const auto& r : rows)
    out << fmt::format("{:<10} {:>5} {:>16} {:>16} {:>16} {:>16}\n", r.row_or_k, r.n, cell(r.precision),
                       cell(r.recall), cell(r.f1), cell(r.auc));
}

}  // namespace schedgraph
