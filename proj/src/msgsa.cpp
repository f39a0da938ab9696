#include "schedgraph/msgsa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "schedgraph/error.hpp"

namespace schedgraph {

ScaleConfig ScaleConfig::up_to(int max_hop) {
  if (max_hop < 1) throw ValidationError("neighbourhood scale must be >= 1");
  ScaleConfig s;
  s.hops.clear();
  for (int k = 1; k <= max_hop; ++k) s.hops.push_back(k);
  s.hops.push_back(kGlobalScale);
  return s;
}

void validate(const ScaleConfig& scales) {
  if (scales.hops.empty()) throw ValidationError("at least one scale is required");
  for (std::size_t k = 0; k < scales.hops.size(); ++k) {
    if (scales.hops[k] < 1) throw ValidationError("scale hop radius must be >= 1");
    if (k > 0 && scales.hops[k] <= scales.hops[k - 1])
      throw ValidationError("scale hop radii must be strictly increasing");
  }
}

namespace {

std::vector<std::vector<std::size_t>> undirected_adjacency(const SchedGraph& graph) {
  std::vector<std::vector<std::size_t>> adj(graph.size());
  for (const auto& e : graph.edges) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

std::vector<std::size_t> bfs_ball(const std::vector<std::vector<std::size_t>>& adj, std::size_t i,
                                  int hops) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<std::size_t> queue{i};
  dist[i] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (dist[u] >= hops) continue;
    for (std::size_t v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  std::vector<std::size_t> ball;
  for (std::size_t v = 0; v < adj.size(); ++v)
    if (dist[v] >= 0) ball.push_back(v);
  return ball;
}

}  // namespace

std::vector<std::size_t> khop_neighborhood(const SchedGraph& graph, std::size_t i, int hops) {
  if (i >= graph.size())
    throw ValidationError("khop_neighborhood: node " + std::to_string(i) + " out of range for " +
                          std::to_string(graph.size()) + " nodes");
  if (hops < 1) throw ValidationError("khop_neighborhood: hops must be >= 1");
  if (hops == kGlobalScale) {
    std::vector<std::size_t> all(graph.size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    return all;
  }
  return bfs_ball(undirected_adjacency(graph), i, hops);
}

Matrix aggregation_matrix(const SchedGraph& graph, int hops) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (hops < 1) throw ValidationError("aggregation_matrix: hops must be >= 1");
  if (hops == kGlobalScale) return Matrix::Constant(n, n, 1.0 / static_cast<double>(n));

  const auto adj = undirected_adjacency(graph);
  Matrix a = Matrix::Zero(n, n);
  if (hops == 1) {
    const Matrix w = graph.weight_matrix();
    const Matrix sym = w + w.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ball = 1.0 + static_cast<double>(adj[static_cast<std::size_t>(i)].size());
      a(i, i) = 1.0 / ball;
      const double total = sym.row(i).sum();
      if (total > 0.0) a.row(i) += (1.0 - 1.0 / ball) * sym.row(i) / total;
    }
    return a;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ball = bfs_ball(adj, static_cast<std::size_t>(i), hops);
    for (std::size_t j : ball) a(i, static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(ball.size());
  }
  return a;
}

Matrix scale_aggregate(const Matrix& h_in, const SchedGraph& graph, int hops, const Matrix& w) {
  if (!h_in.allFinite()) throw NumericError("scale_aggregate: non-finite input");
  if (h_in.rows() != static_cast<Eigen::Index>(graph.size()))
    throw ValidationError("scale_aggregate: feature rows do not match node count");
  if (w.cols() != h_in.cols()) throw ValidationError("scale_aggregate: W shape mismatch");
  return ((aggregation_matrix(graph, hops) * h_in) * w.transpose()).array().tanh().matrix();
}

Matrix scale_attention(const std::vector<Matrix>& h_scales, const Matrix& wa, const RowVector& ba,
                       const RowVector& w) {
  if (h_scales.empty()) throw ValidationError("scale_attention: K must be >= 1");
  const auto n = h_scales.front().rows();
  const auto K = static_cast<Eigen::Index>(h_scales.size());
  Matrix scores(n, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Matrix hidden =
        ((h_scales[static_cast<std::size_t>(k)] * wa.transpose()).rowwise() + ba).array().tanh().matrix();
    scores.col(k) = hidden * w.transpose();
  }
  if (!scores.allFinite()) throw NumericError("scale_attention: non-finite score");
  Matrix beta(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = scores.row(i).maxCoeff();
    beta.row(i) = (scores.row(i).array() - m).exp().matrix();
    beta.row(i) /= beta.row(i).sum();
  }
  return beta;
}

Matrix global_residual(const Matrix& h_fusion, const Matrix& wr, const RowVector& br) {
  if (h_fusion.rows() == 0) throw ValidationError("global_residual: empty graph");
  const RowVector g = h_fusion.colwise().mean();
  const RowVector offset = g * wr.transpose() + br;
  return h_fusion.rowwise() + offset;
}

double msgsa_loss(const MultiScaleEmbedding& ms, const Matrix& h0, double gamma1, double gamma2) {
  if (gamma1 < 0.0 || gamma2 < 0.0) throw ValidationError("msgsa_loss: negative loss weight");
  const auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  double consistency = 0.0;
  for (const auto& hk : ms.h_scales) {
    if (!same(hk, ms.h_fusion)) throw ValidationError("msgsa_loss: scale/fusion shape mismatch");
    consistency += (hk - ms.h_fusion).squaredNorm();
  }
  if (!same(ms.h_final, h0)) throw ValidationError("msgsa_loss: final/h0 shape mismatch");
  return gamma1 * consistency + gamma2 * (ms.h_final - h0).squaredNorm();
}

MultiScaleEmbedding encode(const SchedGraph& graph, const ScaleConfig& scales,
                           const MsgsaParams& params, bool residual) {
  validate(scales);
  if (params.w_scale.size() != scales.size())
    throw ValidationError("encode: one aggregation matrix per scale is required");
  MultiScaleEmbedding ms;
  Matrix h = graph.h;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    h = scale_aggregate(h, graph, scales.hops[k], params.w_scale[k]);
    ms.h_scales.push_back(h);
  }
  ms.beta = scale_attention(ms.h_scales, params.wa, params.ba, params.w);
  ms.h_fusion = fuse_scales(ms.h_scales, ms.beta);
  ms.h_final = residual ? global_residual(ms.h_fusion, params.wr, params.br) : ms.h_fusion;
  return ms;
}

}  // namespace schedgraph
