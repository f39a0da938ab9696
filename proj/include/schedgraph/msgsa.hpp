#pragma once

// Multi-scale graph semantic aggregation: k-hop neighbourhood aggregation,
// scale attention, convex scale fusion, a graph-level residual path and the
// joint consistency loss.

#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "schedgraph/graph.hpp"
#include "schedgraph/tensor.hpp"

namespace schedgraph {

// Hop radius standing for "every node in the graph".
inline constexpr int kGlobalScale = std::numeric_limits<int>::max();

struct ScaleConfig {
  std::vector<int> hops{1, 2, kGlobalScale};

  std::size_t size() const { return hops.size(); }
  // Scales 1..max_hop followed by the global scale.
  static ScaleConfig up_to(int max_hop);
};

void validate(const ScaleConfig& scales);

struct MsgsaParams {
  std::vector<Matrix> w_scale;  // K matrices, d x d
  Matrix wa;                    // d_a x d
  RowVector ba;                 // d_a
  RowVector w;                  // d_a
  Matrix wr;                    // d x d
  RowVector br;                 // d
};

struct MultiScaleEmbedding {
  std::vector<Matrix> h_scales;  // K matrices, n x d
  Matrix beta;                   // n x K
  Matrix h_fusion;               // n x d
  Matrix h_final;                // n x d
};

// Nodes within undirected shortest-path distance <= hops of i, i included,
// sorted ascending. kGlobalScale returns every node.
std::vector<std::size_t> khop_neighborhood(const SchedGraph& graph, std::size_t i, int hops);

// Row-stochastic n x n aggregation operator of one scale.
//
// hops == 1: i keeps weight 1/|N1(i)| on itself and spreads the rest over its
// undirected neighbours in proportion to alpha_ij + alpha_ji, so uniform
// symmetric edge weights give the plain neighbourhood mean.
// hops >= 2 (and global): plain mean over the ball khop_neighborhood(i, hops).
Matrix aggregation_matrix(const SchedGraph& graph, int hops);

// tanh((A_k h_in) W^T), A_k = aggregation_matrix(graph, hops).
Matrix scale_aggregate(const Matrix& h_in, const SchedGraph& graph, int hops, const Matrix& w);

// beta(i, k) = softmax_k(w . tanh(W_a h_i^(k) + b_a)).
Matrix scale_attention(const std::vector<Matrix>& h_scales, const Matrix& wa, const RowVector& ba,
                       const RowVector& w);

// h_fusion_i = sum_k beta(i, k) h_i^(k).
template <typename Derived>
Matrix fuse_scales(const std::vector<Matrix>& h_scales, const Eigen::MatrixBase<Derived>& beta) {
  Matrix out = Matrix::Zero(h_scales.front().rows(), h_scales.front().cols());
  for (std::size_t k = 0; k < h_scales.size(); ++k)
    out += (h_scales[k].array().colwise() * beta.col(static_cast<Eigen::Index>(k)).array()).matrix();
  return out;
}

// h_final_i = h_fusion_i + W_r mean_j(h_fusion_j) + b_r.
Matrix global_residual(const Matrix& h_fusion, const Matrix& wr, const RowVector& br);

// gamma1 sum_i sum_k ||h_i^(k) - h_i^fusion||^2 + gamma2 sum_i ||h_i^final - h_i^(0)||^2.
double msgsa_loss(const MultiScaleEmbedding& ms, const Matrix& h0, double gamma1, double gamma2);

// Full MS-GSA forward on graph.h (= h^(0)). Scales are stacked: scale k
// consumes the output of scale k-1.
MultiScaleEmbedding encode(const SchedGraph& graph, const ScaleConfig& scales,
                           const MsgsaParams& params, bool residual = true);

}  // namespace schedgraph
