#pragma once

// Structure-guided scheduling graph construction: node embedding, typed edge
// construction, attention edge weights with a temporal bias, time-slice
// fusion and the structural-consistency loss.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "schedgraph/tensor.hpp"
#include "schedgraph/workload.hpp"

namespace schedgraph {

// Declaration order is dedup precedence: lower value wins.
enum class EdgeKind { kSharedResource = 0, kSequential = 1, kCoexistence = 2 };

std::string_view to_string(EdgeKind k);

struct EdgeCandidate {
  std::size_t src = 0;  // local node index within the slice
  std::size_t dst = 0;
  EdgeKind kind = EdgeKind::kCoexistence;

  bool operator==(const EdgeCandidate&) const = default;
};

struct EdgeRuleConfig {
  std::size_t seq_k = 2;
  double coexist_eps = 1.0;
};

// Min-max statistics used to normalize per-task input features over a trace.
struct FeatureScaler {
  double submit_min = 0.0, submit_max = 0.0;
  double wait_min = 0.0, wait_max = 0.0;
  double run_min = 0.0, run_max = 0.0;
  int max_priority = 0;

  static FeatureScaler fit(const ScheduleTrace& trace);

  // [demand..., priority / max_priority]
  RowVector resource_features(const TaskRecord& r) const;
  // [submit, start - submit, end - start], each min-max normalized.
  RowVector time_features(const TaskRecord& r) const;
};

struct NodeEmbedParams {
  Matrix task_embed_table;  // hash_buckets x d_task
  Matrix res_proj;          // d_res_in x d_res
  Matrix time_proj;         // 3 x d_time

  Eigen::Index dim() const { return task_embed_table.cols() + res_proj.cols() + time_proj.cols(); }
};

// Row of the task embedding table used for a task id.
Eigen::Index task_bucket(std::int64_t task_id, Eigen::Index hash_buckets);

// h0 = [table(task_id mod buckets), x_res * res_proj, x_time * time_proj].
RowVector init_node_embedding(const TaskRecord& record, const FeatureScaler& scaler,
                              const NodeEmbedParams& params);

// Edges among the tasks of one slice (indices local to `slice`), sorted by
// (src, dst). Symmetric kinds are emitted in both directions; duplicate
// (src, dst) pairs keep the highest-precedence kind.
std::vector<EdgeCandidate> build_edges(const ScheduleTrace& trace,
                                       std::span<const std::size_t> slice,
                                       const EdgeRuleConfig& rules);

// -|submit_i - submit_j| / tau.
double temporal_bias(const TaskRecord& i, const TaskRecord& j, double tau);

struct AttentionParams {
  Matrix wq;  // d x d
  Matrix wk;  // d x d
  double tau = 1.0;
};

// Softmax over each source's outgoing edges of
//   (W_q h_src) . (W_k h_dst) / sqrt(d) + bias_e.
std::vector<double> edge_attention(const Matrix& h, std::span<const EdgeCandidate> edges,
                                   const AttentionParams& params, std::span<const double> bias);

// 1 / out-degree on every edge.
std::vector<double> uniform_edge_weights(std::size_t n_nodes, std::span<const EdgeCandidate> edges);

struct SchedGraph {
  std::size_t slice_index = 0;
  std::vector<std::size_t> nodes;  // task indices into the trace
  Matrix h;                        // n x d node features
  std::vector<EdgeCandidate> edges;
  std::vector<double> alpha;       // one weight per edge

  std::size_t size() const { return nodes.size(); }
  // Dense n x n matrix with alpha(src, dst) on edges and zero elsewhere.
  Matrix weight_matrix() const;
};

struct FusionWeights {
  double prev = 0.25;
  double self = 0.5;
  double next = 0.25;
};

void validate(const FusionWeights& mu);

// Blends edge weights of the neighbouring slices into `cur`. Nodes are
// cur's nodes; edges are the union of the three slices' edges restricted to
// them. Each edge weight is the mu-weighted sum of the slice weights divided
// by the sum of mu over slices that contain both endpoints; rows are then
// renormalized unless only `cur` contributed to them. Edges that end up with
// zero weight are dropped.
SchedGraph fuse_slices(const SchedGraph* prev, const SchedGraph& cur, const SchedGraph* next,
                       const FusionWeights& mu);

// p_hat_i = sum_j alpha_ij p_j over outgoing edges, or p_i for nodes
// without outgoing edges. p is n x C with valid distributions as rows.
Matrix neighbor_prior(const Matrix& p, const SchedGraph& graph);

// lambda1 * sum_e alpha_e ||h_src - h_dst||^2 + lambda2 * sum_i KL(p_i || p_hat_i).
double graph_loss(const Matrix& h, const SchedGraph& graph, const Matrix& p, const Matrix& p_hat,
                  double lambda1, double lambda2);

// Debug dump: one JSON object per line, {"kind":"node",...} for every node
// followed by {"kind":"edge",...} for every edge of the graph.
void write_graph_dump(const ScheduleTrace& trace, const SchedGraph& graph, std::ostream& out);

}  // namespace schedgraph
