#pragma once

// The full detector: node embedding -> attention-weighted, time-fused slice
// graph -> multi-scale aggregation with residual -> per-node two-class head.
// Everything here runs on a Tape so the complete loss is differentiable.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "schedgraph/graph.hpp"
#include "schedgraph/msgsa.hpp"
#include "schedgraph/tensor.hpp"
#include "schedgraph/workload.hpp"

namespace schedgraph {

struct GraphConfig {
  double window_len = 10.0;
  double stride = 5.0;
  std::size_t seq_k = 2;
  std::optional<double> coexist_eps;  // default window_len / 10
  std::optional<double> tau;          // default window_len
  FusionWeights mu;

  EdgeRuleConfig rules() const;
  double tau_value() const;
};

void validate(const GraphConfig& config);

struct ModelConfig {
  std::size_t d_task = 4;
  std::size_t d_res = 6;
  std::size_t d_time = 6;
  std::size_t n_resources = 2;
  std::size_t hash_buckets = 1024;
  std::size_t d_attn = 0;  // 0 means d
  ScaleConfig scales;
  // Learned attention edge weights, slice fusion and the graph loss. When
  // off, every edge gets 1 / out-degree and slices are not fused.
  bool use_gsg = true;
  // Multi-scale aggregation, scale attention, residual path and the MS-GSA
  // loss. When off, a single 1-hop scale is used without residual.
  bool use_msgsa = true;
  bool residual = true;

  std::size_t d() const { return d_task + d_res + d_time; }
  std::size_t attn_dim() const { return d_attn == 0 ? d() : d_attn; }
  ScaleConfig effective_scales() const;
  bool effective_residual() const { return use_msgsa && residual; }
};

void validate(const ModelConfig& config);

struct LossWeights {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double gamma1 = 0.1;
  double gamma2 = 0.1;
};

// Invariant, parameter-free parts of one slice graph.
struct SliceData {
  std::size_t slice_index = 0;
  std::vector<std::size_t> nodes;  // task indices into the trace
  std::vector<std::int64_t> task_ids;
  std::vector<int> labels;  // 1 = anomalous
  std::vector<Eigen::Index> buckets;
  Matrix x_res;   // n x (n_resources + 1)
  Matrix x_time;  // n x 3
  std::vector<EdgeCandidate> edges;
  Matrix edge_mask;  // n x n, 1 on edges
  Matrix bias;       // n x n temporal bias on edges

  std::size_t size() const { return nodes.size(); }
};

// Invariant structure of the fused graph seen by the encoder.
struct FusedStructure {
  std::vector<EdgeCandidate> edges;
  Matrix inv_denom;              // 1 / sum of mu over slices holding both endpoints
  std::vector<char> keep_rows;   // rows fed only by the current slice
  std::vector<Eigen::Index> prev_index;  // cur local -> prev local, -1 if absent
  std::vector<Eigen::Index> next_index;
  bool use_prev = false;
  bool use_next = false;
  double mu_prev = 0.0;  // fusion weights actually applied
  double mu_self = 1.0;
  double mu_next = 0.0;
  Matrix uniform_alpha;   // 1 / out-degree on cur edges
  Matrix one_hop_self;    // n x 1, 1 / |N1(i)|
  Matrix one_hop_rest;    // n x 1, 1 - 1 / |N1(i)|
  Matrix isolated;        // n x 1, 1 for nodes without outgoing fused edges
  std::vector<Matrix> agg;  // per scale; empty for the 1-hop scale
};

struct GraphSequence {
  std::vector<SliceData> slices;
  std::vector<FusedStructure> fused;
  std::vector<std::size_t> samples;  // slice positions with at least one node
};

GraphSequence prepare_sequence(const ScheduleTrace& trace, const GraphConfig& graph,
                               const ModelConfig& model);

ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

// Throws ValidationError naming expected and actual d when a checkpoint does
// not fit the model configuration.
void check_compatible(const ParamStore& params, const ModelConfig& config);

struct DropoutSpec {
  double p = 0.0;
  std::uint64_t seed = 0;
};

struct ForwardPass {
  Var h0;
  Var alpha;  // fused n x n edge weights
  std::vector<Var> h_scales;
  Var beta;
  Var h_fusion;
  Var h_final;
  Var probs;  // n x 2 class distribution
};

ForwardPass forward(Tape& tape, ParamStore& params, const GraphSequence& seq, std::size_t slice_pos,
                    const ModelConfig& config, const std::optional<DropoutSpec>& dropout = {});

// Per-source weights the attention produces on one slice's own edges.
Var slice_attention(Tape& tape, ParamStore& params, const SliceData& slice, const ModelConfig& config,
                    Var h0);
Var embed_slice(Tape& tape, ParamStore& params, const SliceData& slice, const ModelConfig& config);

struct LossParts {
  Var total;
  double ce = 0.0;
  double graph = 0.0;
  double msgsa = 0.0;
};

// CE(probs, labels) + L_graph + L_MS-GSA on one slice graph.
LossParts total_loss(Tape& tape, const ForwardPass& fp, const SliceData& slice,
                     const FusedStructure& fused, const ModelConfig& config,
                     const LossWeights& weights);

// Class-1 probability for every node of slice `slice_pos`.
Vector forward_score(ParamStore& params, const GraphSequence& seq, std::size_t slice_pos,
                     const ModelConfig& config, const std::optional<DropoutSpec>& dropout = {});

}  // namespace schedgraph
