// schedgraph command-line tool.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
// numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "schedgraph/checkpoint.hpp"
#include "schedgraph/config.hpp"
#include "schedgraph/error.hpp"
#include "schedgraph/experiments.hpp"
#include "schedgraph/rng.hpp"
#include "schedgraph/trace_io.hpp"
#include "schedgraph/trainer.hpp"

namespace fs = std::filesystem;
using namespace schedgraph;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string trace;
  std::string val_trace;
  std::string checkpoint;
  bool dump_embeddings = false;
  bool dump_graph = false;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("schedgraph");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("SCHEDGRAPH_LOG");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

RunConfig load(const Options& o) {
  RunConfig c;
  if (!o.config.empty()) c = load_run_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  return c;
}

fs::path out_dir(const Options& o, const RunConfig& c) {
  fs::path dir = !o.out.empty() ? fs::path(o.out) : fs::path(c.out.value_or("."));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

// Resource dimensionality is a property of the data, not the config.
void fit_resources(ModelConfig& model, const ScheduleTrace& trace) {
  if (!trace.tasks.empty()) model.n_resources = trace.tasks.front().resource_demand.size();
}

int cmd_generate(const Options& o) {
  const RunConfig c = load(o);
  ScheduleTrace trace = generate_trace(c.generate);
  for (std::size_t i = 0; i < c.disturbances.size(); ++i)
    trace = inject_disturbance(trace, c.disturbances[i], derive_seed(c.seed, SeedStream::kInject, i));
  const fs::path path = out_dir(o, c) / "trace.jsonl";
  write_trace_file(trace, path);

  std::map<std::string, std::size_t> counts;
  for (auto l : {AnomalyLabel::kNone, AnomalyLabel::kStructuralShift, AnomalyLabel::kResourceChange,
                 AnomalyLabel::kTaskDelay})
    counts[std::string(to_string(l))] = 0;
  for (const auto& t : trace.tasks) ++counts[std::string(to_string(t.anomaly_label))];
  std::cout << fmt::format("wrote {} tasks to {}\n", trace.tasks.size(), path.string());
  for (const auto& [label, n] : counts) std::cout << fmt::format("  {:<17} {:>7}\n", label, n);
  return 0;
}

int cmd_train(const Options& o) {
  RunConfig c = load(o);
  const ScheduleTrace trace = read_trace_file(o.trace);
  fit_resources(c.model, trace);
  const Dataset data = o.val_trace.empty()
                           ? make_temporal_split(trace, c.val_fraction, c.graph, c.model)
                           : make_dataset({trace}, {read_trace_file(o.val_trace)}, c.graph, c.model);
  spdlog::info("training on {} slice graphs, validating on {}", data.train.size(), data.val.size());
  const TrainResult r = train(data, c.model, c.train, [](const EpochLog& e) {
    if (e.val)
      spdlog::info("epoch {:>4} loss {:.6f} val f1 {:.4f} auc {:.4f}", e.epoch, e.loss_total, e.val->f1,
                   e.val->auc);
  });
  const fs::path dir = out_dir(o, c);
  save_checkpoint(r.params, dir / "checkpoint.bin");
  auto log = open_out(dir / "train_log.csv");
  write_train_log(r.log, log);
  std::cout << fmt::format("wrote {} and {}\n", (dir / "checkpoint.bin").string(), (dir / "train_log.csv").string());
  return 0;
}

int cmd_score(const Options& o) {
  RunConfig c = load(o);
  const ScheduleTrace trace = read_trace_file(o.trace);
  fit_resources(c.model, trace);
  ParamStore params = load_checkpoint(fs::path(o.checkpoint));
  check_compatible(params, c.model);
  const GraphSequence seq = prepare_sequence(trace, c.graph, c.model);
  const fs::path dir = out_dir(o, c);

  auto scores = open_out(dir / "scores.csv");
  scores << "task_id,slice,score,label\n";
  std::ofstream emb, graph;
  if (o.dump_embeddings) {
    emb = open_out(dir / "embeddings.csv");
    emb << "node_id,slice,label";
    for (std::size_t j = 0; j < c.model.d(); ++j) emb << ",h" << j;
    emb << '\n';
  }
  if (o.dump_graph) graph = open_out(dir / "graph.jsonl");

  for (std::size_t t : seq.samples) {
    const SliceData& s = seq.slices[t];
    Tape tape;
    const ForwardPass fp = forward(tape, params, seq, t, c.model);
    const Matrix& probs = fp.probs.value();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      scores << fmt::format("{},{},{:.17g},{}\n", s.task_ids[i], t, probs(r, 1), s.labels[i]);
      if (o.dump_embeddings) {
        emb << s.task_ids[i] << ',' << t << ',' << s.labels[i];
        for (Eigen::Index j = 0; j < fp.h_final.value().cols(); ++j)
          emb << fmt::format(",{:.17g}", fp.h_final.value()(r, j));
        emb << '\n';
      }
    }
    if (o.dump_graph) {
      SchedGraph g;
      g.slice_index = t;
      g.nodes = s.nodes;
      g.h = fp.h_final.value();
      g.edges = seq.fused[t].edges;
      for (const auto& e : g.edges)
        g.alpha.push_back(fp.alpha.value()(static_cast<Eigen::Index>(e.src), static_cast<Eigen::Index>(e.dst)));
      write_graph_dump(trace, g, graph);
    }
  }
  std::cout << fmt::format("wrote {}\n", (dir / "scores.csv").string());
  return 0;
}

int report(const Options& o, const RunConfig& c, const std::vector<CellResult>& cells, bool plot) {
  const fs::path dir = out_dir(o, c);
  auto results = open_out(dir / "results.csv");
  write_results_csv(cells, results);
  const auto rows = summarize(cells);
  if (plot) {
    auto p = open_out(dir / "plot_data.csv");
    write_plot_csv(rows, p);
  }
  print_summary(rows, std::cout);
  return 0;
}

int cmd_evaluate(const Options& o) {
  const RunConfig c = load(o);
  return report(o, c, run_evaluate(c.experiment(o.jobs)), false);
}

int cmd_ablate(const Options& o) {
  const RunConfig c = load(o);
  return report(o, c, run_ablation(c.experiment(o.jobs)), false);
}

int cmd_sweep(const Options& o) {
  const RunConfig c = load(o);
  return report(o, c, neighborhood_sweep(c.experiment(o.jobs)), true);
}

int cmd_gradcheck(const Options& o) {
  const RunConfig c = load(o);
  const GradCheckReport r = model_gradcheck(c.graph, c.model, c.train.loss, c.seed);
  for (const auto& [name, err] : r.max_rel_error) std::cout << fmt::format("{:<16} {:.3e}\n", name, err);
  std::cout << fmt::format("worst {:.3e} ({}), tolerance {:.0e}: {}\n", r.worst(), r.worst_param(), r.tolerance,
                           r.passed ? "PASS" : "FAIL");
  return r.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Graph-based scheduling anomaly detection"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (default: config \"out\" or .)");
    sub->add_option("--seed", o.seed, "root seed, overrides the config");
    sub->add_option("--jobs", o.jobs, "parallel experiment cells")->check(CLI::PositiveNumber);
  };

  std::map<CLI::App*, int (*)(const Options&)> handlers;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    handlers[sub] = fn;
    return sub;
  };

  add("generate", "write a synthetic trace", cmd_generate);
  auto* tr = add("train", "train on a trace, write checkpoint and log", cmd_train);
  tr->add_option("--trace", o.trace, "training trace")->required();
  tr->add_option("--val-trace", o.val_trace, "validation trace (default: temporal holdout)");
  auto* sc = add("score", "per-task anomaly scores", cmd_score);
  sc->add_option("--trace", o.trace, "trace to score")->required();
  sc->add_option("--checkpoint", o.checkpoint, "checkpoint from train")->required();
  sc->add_flag("--dump-embeddings", o.dump_embeddings, "also write embeddings.csv");
  sc->add_flag("--dump-graph", o.dump_graph, "also write graph.jsonl");
  add("evaluate", "train and validate the full model on the benchmark", cmd_evaluate);
  add("ablate", "module ablation on the benchmark", cmd_ablate);
  add("sweep", "neighbourhood-scale sweep on the benchmark", cmd_sweep);
  add("gradcheck", "finite-difference check of the full loss", cmd_gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) return fn(o);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
