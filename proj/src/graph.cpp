#include "schedgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>

#include <json.hpp>

#include "schedgraph/error.hpp"

namespace schedgraph {

std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::kSharedResource: return "shared_resource";
    case EdgeKind::kSequential: return "sequential";
    case EdgeKind::kCoexistence: return "coexistence";
  }
  return "coexistence";
}

// ---------------------------------------------------------------- features

namespace {

double minmax(double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.0; }

}  // namespace

FeatureScaler FeatureScaler::fit(const ScheduleTrace& trace) {
  FeatureScaler s;
  bool first = true;
  for (const auto& t : trace.tasks) {
    const double wait = t.start_time - t.submit_time;
    const double run = t.end_time - t.start_time;
    if (first) {
      s.submit_min = s.submit_max = t.submit_time;
      s.wait_min = s.wait_max = wait;
      s.run_min = s.run_max = run;
      first = false;
    }
    s.submit_min = std::min(s.submit_min, t.submit_time);
    s.submit_max = std::max(s.submit_max, t.submit_time);
    s.wait_min = std::min(s.wait_min, wait);
    s.wait_max = std::max(s.wait_max, wait);
    s.run_min = std::min(s.run_min, run);
    s.run_max = std::max(s.run_max, run);
    s.max_priority = std::max(s.max_priority, t.priority);
  }
  return s;
}

RowVector FeatureScaler::resource_features(const TaskRecord& r) const {
  const auto n = static_cast<Eigen::Index>(r.resource_demand.size());
  RowVector x(n + 1);
  for (Eigen::Index k = 0; k < n; ++k) x(k) = r.resource_demand[static_cast<std::size_t>(k)];
  x(n) = max_priority > 0 ? static_cast<double>(r.priority) / max_priority : 0.0;
  return x;
}

RowVector FeatureScaler::time_features(const TaskRecord& r) const {
  RowVector x(3);
  x << minmax(r.submit_time, submit_min, submit_max),
      minmax(r.start_time - r.submit_time, wait_min, wait_max),
      minmax(r.end_time - r.start_time, run_min, run_max);
  return x;
}

Eigen::Index task_bucket(std::int64_t task_id, Eigen::Index hash_buckets) {
  if (hash_buckets <= 0) throw ValidationError("hash_buckets must be positive");
  const auto b = static_cast<std::int64_t>(hash_buckets);
  return static_cast<Eigen::Index>(((task_id % b) + b) % b);
}

RowVector init_node_embedding(const TaskRecord& record, const FeatureScaler& scaler,
                              const NodeEmbedParams& params) {
  const RowVector x_res = scaler.resource_features(record);
  const RowVector x_time = scaler.time_features(record);
  if (!x_res.allFinite() || !x_time.allFinite())
    throw NumericError("non-finite input feature for task " + std::to_string(record.task_id));
  if (params.res_proj.rows() != x_res.size())
    throw ValidationError("res_proj expects " + std::to_string(params.res_proj.rows()) +
                          " inputs, record has " + std::to_string(x_res.size()));
  if (params.time_proj.rows() != x_time.size())
    throw ValidationError("time_proj must have 3 rows");

  RowVector h(params.dim());
  const Eigen::Index dt = params.task_embed_table.cols();
  const Eigen::Index dr = params.res_proj.cols();
  if (dt > 0)
    h.head(dt) = params.task_embed_table.row(task_bucket(record.task_id, params.task_embed_table.rows()));
  h.segment(dt, dr) = x_res * params.res_proj;
  h.tail(params.time_proj.cols()) = x_time * params.time_proj;
  return h;
}

// ---------------------------------------------------------------- edges

std::vector<EdgeCandidate> build_edges(const ScheduleTrace& trace,
                                       std::span<const std::size_t> slice,
                                       const EdgeRuleConfig& rules) {
  if (slice.empty()) throw ValidationError("build_edges: empty slice");
  std::map<std::pair<std::size_t, std::size_t>, EdgeKind> found;
  auto offer = [&](std::size_t s, std::size_t d, EdgeKind k) {
    auto [it, inserted] = found.emplace(std::make_pair(s, d), k);
    if (!inserted && k < it->second) it->second = k;
  };

  const std::size_t n = slice.size();
  auto task = [&](std::size_t local) -> const TaskRecord& { return trace.tasks.at(slice[local]); };

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const TaskRecord& ta = task(a);
      const TaskRecord& tb = task(b);
      if (ta.node_id == tb.node_id && ta.start_time < tb.end_time && tb.start_time < ta.end_time) {
        offer(a, b, EdgeKind::kSharedResource);
        offer(b, a, EdgeKind::kSharedResource);
      }
      if (std::abs(ta.submit_time - tb.submit_time) <= rules.coexist_eps) {
        offer(a, b, EdgeKind::kCoexistence);
        offer(b, a, EdgeKind::kCoexistence);
      }
    }
  }

  if (rules.seq_k > 0) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const TaskRecord& ta = task(a);
      const TaskRecord& tb = task(b);
      if (ta.start_time != tb.start_time) return ta.start_time < tb.start_time;
      return ta.task_id < tb.task_id;
    });
    for (std::size_t i = 0; i < n; ++i) {
      const TaskRecord& ti = task(i);
      std::size_t taken = 0;
      for (std::size_t j : order) {
        if (taken == rules.seq_k) break;
        if (j == i) continue;
        const TaskRecord& tj = task(j);
        if (tj.node_id != ti.node_id || tj.start_time < ti.end_time) continue;
        offer(i, j, EdgeKind::kSequential);
        ++taken;
      }
    }
  }

  std::vector<EdgeCandidate> edges;
  edges.reserve(found.size());
  for (const auto& [key, kind] : found) edges.push_back({key.first, key.second, kind});
  return edges;
}

double temporal_bias(const TaskRecord& i, const TaskRecord& j, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temporal_bias: tau must be positive");
  return -std::abs(i.submit_time - j.submit_time) / tau;
}

// ---------------------------------------------------------------- attention

namespace {

// Applies a per-source softmax to `logits` in place.
void softmax_by_source(std::span<const EdgeCandidate> edges, std::vector<double>& logits) {
  std::map<std::size_t, std::vector<std::size_t>> by_src;
  for (std::size_t e = 0; e < edges.size(); ++e) by_src[edges[e].src].push_back(e);
  for (const auto& [src, ids] : by_src) {
    double m = logits[ids.front()];
    for (std::size_t e : ids) m = std::max(m, logits[e]);
    double total = 0.0;
    for (std::size_t e : ids) total += (logits[e] = std::exp(logits[e] - m));
    for (std::size_t e : ids) logits[e] /= total;
  }
}

}  // namespace

std::vector<double> edge_attention(const Matrix& h, std::span<const EdgeCandidate> edges,
                                   const AttentionParams& params, std::span<const double> bias) {
  if (bias.size() != edges.size())
    throw ValidationError("edge_attention: " + std::to_string(bias.size()) + " biases for " +
                          std::to_string(edges.size()) + " edges");
  if (!h.allFinite()) throw NumericError("edge_attention: non-finite node features");
  const auto d = h.cols();
  if (params.wq.rows() != d || params.wq.cols() != d || params.wk.rows() != d || params.wk.cols() != d)
    throw ValidationError("edge_attention: W_q and W_k must be " + std::to_string(d) + "x" +
                          std::to_string(d));
  const Matrix q = h * params.wq.transpose();
  const Matrix k = h * params.wk.transpose();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<double> logits(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& edge = edges[e];
    if (edge.src >= static_cast<std::size_t>(h.rows()) || edge.dst >= static_cast<std::size_t>(h.rows()))
      throw ValidationError("edge_attention: edge index out of range");
    const auto s = static_cast<Eigen::Index>(edge.src);
    const auto t = static_cast<Eigen::Index>(edge.dst);
    logits[e] = q.row(s).dot(k.row(t)) * inv_sqrt_d + bias[e];
    if (!std::isfinite(logits[e]))
      throw NumericError("edge_attention: non-finite logit on edge " + std::to_string(edge.src) +
                         "->" + std::to_string(edge.dst));
  }
  softmax_by_source(edges, logits);
  return logits;
}

std::vector<double> uniform_edge_weights(std::size_t n_nodes, std::span<const EdgeCandidate> edges) {
  std::vector<std::size_t> degree(n_nodes, 0);
  for (const auto& e : edges) ++degree.at(e.src);
  std::vector<double> w(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) w[e] = 1.0 / static_cast<double>(degree[edges[e].src]);
  return w;
}

Matrix SchedGraph::weight_matrix() const {
  const auto n = static_cast<Eigen::Index>(nodes.size());
  Matrix w = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < edges.size(); ++e)
    w(static_cast<Eigen::Index>(edges[e].src), static_cast<Eigen::Index>(edges[e].dst)) = alpha[e];
  return w;
}

// ---------------------------------------------------------------- fusion

void validate(const FusionWeights& mu) {
  if (mu.prev < 0.0 || mu.self < 0.0 || mu.next < 0.0)
    throw ValidationError("fusion weights must be non-negative");
  if (std::abs(mu.prev + mu.self + mu.next - 1.0) > 1e-9)
    throw ValidationError("fusion weights must sum to 1");
}

SchedGraph fuse_slices(const SchedGraph* prev, const SchedGraph& cur, const SchedGraph* next,
                       const FusionWeights& mu) {
  validate(mu);
  std::unordered_map<std::size_t, std::size_t> local;  // task index -> cur local index
  for (std::size_t i = 0; i < cur.nodes.size(); ++i) local.emplace(cur.nodes[i], i);

  struct SliceView {
    const SchedGraph* g;
    double mu;
    std::unordered_map<std::size_t, std::size_t> index;  // task index -> local in g
    std::map<std::pair<std::size_t, std::size_t>, double> weight;  // keyed by cur locals
  };
  std::vector<SliceView> views;
  auto add_view = [&](const SchedGraph* g, double m) {
    if (g == nullptr || m <= 0.0) return;
    SliceView v{g, m, {}, {}};
    for (std::size_t i = 0; i < g->nodes.size(); ++i) v.index.emplace(g->nodes[i], i);
    for (std::size_t e = 0; e < g->edges.size(); ++e) {
      auto s = local.find(g->nodes[g->edges[e].src]);
      auto d = local.find(g->nodes[g->edges[e].dst]);
      if (s == local.end() || d == local.end()) continue;
      v.weight[{s->second, d->second}] = g->alpha[e];
    }
    views.push_back(std::move(v));
  };
  add_view(prev, mu.prev);
  add_view(&cur, mu.self);
  add_view(next, mu.next);

  std::map<std::pair<std::size_t, std::size_t>, EdgeKind> kinds;
  auto offer_edges = [&](const SchedGraph* g) {
    if (g == nullptr) return;
    for (const auto& e : g->edges) {
      auto s = local.find(g->nodes[e.src]);
      auto d = local.find(g->nodes[e.dst]);
      if (s == local.end() || d == local.end()) continue;
      auto [it, inserted] = kinds.emplace(std::make_pair(s->second, d->second), e.kind);
      if (!inserted && e.kind < it->second) it->second = e.kind;
    }
  };
  offer_edges(prev);
  offer_edges(&cur);
  offer_edges(next);

  SchedGraph out;
  out.slice_index = cur.slice_index;
  out.nodes = cur.nodes;
  out.h = cur.h;
  std::vector<char> renorm(cur.nodes.size(), 0);
  for (const auto& [key, kind] : kinds) {
    double num = 0.0;
    double denom = 0.0;
    bool from_edge = false;
    bool only_cur = true;
    for (const auto& v : views) {
      const bool has_both = v.index.contains(cur.nodes[key.first]) && v.index.contains(cur.nodes[key.second]);
      if (!has_both) continue;
      denom += v.mu;
      if (v.g != &cur) only_cur = false;
      if (auto it = v.weight.find(key); it != v.weight.end()) {
        num += v.mu * it->second;
        from_edge = true;
      }
    }
    if (!from_edge) continue;
    if (denom <= 0.0)
      throw ValidationError("fuse_slices: fusion weights vanish for edge " + std::to_string(key.first) +
                            "->" + std::to_string(key.second));
    out.edges.push_back({key.first, key.second, kind});
    out.alpha.push_back(num / denom);
    if (!only_cur) renorm[key.first] = 1;
  }

  std::vector<double> row_sum(cur.nodes.size(), 0.0);
  for (std::size_t e = 0; e < out.edges.size(); ++e) row_sum[out.edges[e].src] += out.alpha[e];
  for (std::size_t e = 0; e < out.edges.size(); ++e)
    if (renorm[out.edges[e].src]) out.alpha[e] /= row_sum[out.edges[e].src];
  return out;
}

// ---------------------------------------------------------------- loss

namespace {

void validate_distributions(const Matrix& p, const char* what) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || !p.row(i).allFinite())
      throw ValidationError(std::string(what) + ": row " + std::to_string(i) + " has negative entries");
    if (std::abs(p.row(i).sum() - 1.0) > 1e-9)
      throw ValidationError(std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
  }
}

}  // namespace

Matrix neighbor_prior(const Matrix& p, const SchedGraph& graph) {
  if (p.rows() != static_cast<Eigen::Index>(graph.size()))
    throw ValidationError("neighbor_prior: distribution count does not match node count");
  validate_distributions(p, "neighbor_prior");
  Matrix out = Matrix::Zero(p.rows(), p.cols());
  std::vector<bool> has_out(graph.size(), false);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto s = static_cast<Eigen::Index>(graph.edges[e].src);
    out.row(s) += graph.alpha[e] * p.row(static_cast<Eigen::Index>(graph.edges[e].dst));
    has_out[graph.edges[e].src] = true;
  }
  for (std::size_t i = 0; i < graph.size(); ++i)
    if (!has_out[i]) out.row(static_cast<Eigen::Index>(i)) = p.row(static_cast<Eigen::Index>(i));
  return out;
}

double graph_loss(const Matrix& h, const SchedGraph& graph, const Matrix& p, const Matrix& p_hat,
                  double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ValidationError("graph_loss: negative loss weight");
  if (p.rows() != p_hat.rows() || p.cols() != p_hat.cols())
    throw ValidationError("graph_loss: p and p_hat shapes differ");
  validate_distributions(p, "graph_loss(p)");
  validate_distributions(p_hat, "graph_loss(p_hat)");
  double smooth = 0.0;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto s = static_cast<Eigen::Index>(graph.edges[e].src);
    const auto d = static_cast<Eigen::Index>(graph.edges[e].dst);
    smooth += (h.row(s) - h.row(d)).squaredNorm() * graph.alpha[e];
  }
  const double kl = (p.array() * ((p.array() + kProbFloor).log() - (p_hat.array() + kProbFloor).log())).sum();
  return lambda1 * smooth + lambda2 * kl;
}

// ---------------------------------------------------------------- dump

void write_graph_dump(const ScheduleTrace& trace, const SchedGraph& graph, std::ostream& out) {
  using nlohmann::json;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& t = trace.tasks.at(graph.nodes[i]);
    json j{{"kind", "node"},
           {"slice", graph.slice_index},
           {"index", i},
           {"task_id", t.task_id},
           {"anomaly_label", to_string(t.anomaly_label)}};
    out << j.dump() << '\n';
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    json j{{"kind", "edge"},
           {"slice", graph.slice_index},
           {"src", trace.tasks.at(graph.nodes[edge.src]).task_id},
           {"dst", trace.tasks.at(graph.nodes[edge.dst]).task_id},
           {"edge_kind", to_string(edge.kind)},
           {"alpha", graph.alpha[e]}};
    out << j.dump() << '\n';
  }
}

}  // namespace schedgraph
