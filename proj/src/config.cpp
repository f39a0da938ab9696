#include "schedgraph/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "schedgraph/error.hpp"
#include "schedgraph/rng.hpp"

namespace schedgraph {

using nlohmann::json;

void RunConfig::set_seed(std::uint64_t root) {
  seed = root;
  generate.seed = derive_seed(root, SeedStream::kGenerate);
  train.seed = root;
}

ExperimentConfig RunConfig::experiment(std::size_t jobs) const {
  ExperimentConfig e;
  e.bench = bench;
  e.graph = graph;
  e.model = model;
  e.train = train;
  e.seeds.clear();
  for (std::size_t i = 0; i < n_seeds; ++i) e.seeds.push_back(derive_seed(seed, SeedStream::kBenchmark, i));
  e.k_values = k_values;
  e.threshold = threshold;
  e.jobs = jobs;
  return e;
}

namespace {

// Reads the fields of one JSON object, remembering which keys were consumed
// so leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ValidationError("config key '" + where + "': " + what);
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void optional_number(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) return out.reset();
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename T>
  void count(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key_path(key), "expected a non-negative integer");
      out = static_cast<T>(v->get<std::uint64_t>());
    }
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::optional<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  // Section for a nested object, if present.
  template <typename Fn>
  void object(const std::string& key, Fn&& fn) {
    if (const json* v = find(key)) {
      Section child(*v, key_path(key));
      fn(child);
      child.finish();
    }
  }
  template <typename Fn>
  void array(const std::string& key, Fn&& fn) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key_path(key), "expected an array");
      for (std::size_t i = 0; i < v->size(); ++i) fn((*v)[i], key_path(key) + "[" + std::to_string(i) + "]");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.contains(it.key())) fail(key_path(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

DisturbanceKind kind_at(const json& v, const std::string& where) {
  if (!v.is_string()) Section::fail(where, "expected a disturbance kind string");
  try {
    return disturbance_kind_from_string(v.get<std::string>());
  } catch (const ValidationError& e) {
    Section::fail(where, e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root, "");
  const json* schema = top.find("schema");
  if (schema == nullptr) Section::fail("schema", "missing");
  if (!schema->is_number_integer() || schema->get<int>() != kConfigSchema)
    Section::fail("schema", "unsupported version, expected " + std::to_string(kConfigSchema));

  std::uint64_t seed = 0;
  top.count("seed", seed);
  top.string("out", c.out);

  top.object("generate", [&](Section& s) {
    GenConfig& g = c.generate;
    s.count("n_tasks", g.n_tasks);
    s.count("n_nodes", g.n_nodes);
    s.number("horizon", g.horizon);
    s.number("mean_interarrival", g.mean_interarrival);
    s.count("n_resources", g.n_resources);
    s.number("mean_duration", g.mean_duration);
    s.integer("n_priorities", g.n_priorities);
    s.integer("n_stages", g.n_stages);
    s.number("failure_rate", g.failure_rate);
    s.number("node_capacity", g.node_capacity);
    s.array("disturbances", [&](const json& v, const std::string& where) {
      Section d(v, where);
      DisturbanceSpec spec;
      if (const json* k = d.find("kind"))
        spec.kind = kind_at(*k, d.key_path("kind"));
      else
        Section::fail(d.key_path("kind"), "missing");
      d.number("onset", spec.onset);
      d.number("duration", spec.duration);
      d.number("magnitude", spec.magnitude);
      d.number("affected_fraction", spec.affected_fraction);
      d.finish();
      c.disturbances.push_back(spec);
    });
  });

  top.object("graph", [&](Section& s) {
    GraphConfig& g = c.graph;
    s.number("window_len", g.window_len);
    s.number("stride", g.stride);
    s.count("seq_k", g.seq_k);
    s.optional_number("coexist_eps", g.coexist_eps);
    s.optional_number("tau", g.tau);
    s.object("mu", [&](Section& m) {
      m.number("prev", g.mu.prev);
      m.number("self", g.mu.self);
      m.number("next", g.mu.next);
    });
  });

  top.object("model", [&](Section& s) {
    ModelConfig& m = c.model;
    s.count("d_task", m.d_task);
    s.count("d_res", m.d_res);
    s.count("d_time", m.d_time);
    s.count("hash_buckets", m.hash_buckets);
    s.count("d_attn", m.d_attn);
    s.boolean("use_gsg", m.use_gsg);
    s.boolean("use_msgsa", m.use_msgsa);
    s.boolean("residual", m.residual);
    if (s.find("scales") != nullptr) m.scales.hops.clear();
    s.array("scales", [&](const json& v, const std::string& where) {
      if (v.is_string() && v.get<std::string>() == "global")
        m.scales.hops.push_back(kGlobalScale);
      else if (v.is_number_unsigned())
        m.scales.hops.push_back(v.get<int>());
      else
        Section::fail(where, "expected a hop radius or \"global\"");
    });
  });

  top.object("train", [&](Section& s) {
    TrainConfig& t = c.train;
    s.number("learning_rate", t.learning_rate);
    s.count("batch_size", t.batch_size);
    s.count("epochs", t.epochs);
    s.number("weight_decay", t.weight_decay);
    s.number("dropout_p", t.dropout_p);
    s.count("eval_every", t.eval_every);
    s.number("val_fraction", c.val_fraction);
    s.number("lambda1", t.loss.lambda1);
    s.number("lambda2", t.loss.lambda2);
    s.number("gamma1", t.loss.gamma1);
    s.number("gamma2", t.loss.gamma2);
  });

  top.object("eval", [&](Section& s) {
    s.count("n_seeds", c.n_seeds);
    s.number("threshold", c.threshold);
    if (s.find("k_values") != nullptr) c.k_values.clear();
    s.array("k_values", [&](const json& v, const std::string& where) {
      if (!v.is_number_unsigned()) Section::fail(where, "expected a positive integer");
      c.k_values.push_back(v.get<int>());
    });
    s.object("benchmark", [&](Section& b) {
      BenchmarkConfig& bc = c.bench;
      b.count("n_tasks", bc.n_tasks);
      b.count("n_nodes", bc.n_nodes);
      b.count("n_traces", bc.n_traces);
      b.count("n_val_traces", bc.n_val_traces);
      b.number("mean_interarrival", bc.mean_interarrival);
      b.number("disturbance_span", bc.disturbance_span);
      b.number("magnitude", bc.magnitude);
      b.number("affected_fraction", bc.affected_fraction);
      if (b.find("kinds") != nullptr) bc.kinds.clear();
      b.array("kinds", [&](const json& v, const std::string& where) { bc.kinds.push_back(kind_at(v, where)); });
    });
  });
  top.finish();

  c.model.n_resources = c.generate.n_resources;
  c.set_seed(seed);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void validate(const RunConfig& c) {
  validate(c.generate);
  for (const auto& d : c.disturbances) validate(d, c.generate.horizon);
  validate(c.graph);
  validate(c.model);
  validate(c.train);
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ValidationError("train.val_fraction must be in [0, 1)");
  if (c.n_seeds < 1) throw ValidationError("eval.n_seeds must be >= 1");
  if (c.k_values.empty()) throw ValidationError("eval.k_values must not be empty");
  for (int k : c.k_values)
    if (k < 1) throw ValidationError("eval.k_values entries must be >= 1");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw ValidationError("eval.threshold must be in [0, 1]");
  validate(c.bench);
}

}  // namespace schedgraph
