#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "schedgraph/error.hpp"
#include "schedgraph/graph.hpp"
#include "schedgraph/rng.hpp"

using namespace schedgraph;
using testing_util::task;
using testing_util::trace_of;

namespace {

std::vector<std::size_t> all(const ScheduleTrace& t) {
  std::vector<std::size_t> idx(t.tasks.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

SchedGraph graph_with(std::vector<std::size_t> nodes, std::vector<EdgeCandidate> edges, std::vector<double> alpha) {
  SchedGraph g;
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  g.alpha = std::move(alpha);
  g.h = Matrix::Zero(static_cast<Eigen::Index>(g.nodes.size()), 2);
  return g;
}

}  // namespace

TEST(Embedding, ZeroProjectionsGiveZero) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 3.0), task(2, 2.0, 2.5, 9.0)});
  const auto scaler = FeatureScaler::fit(tr);
  NodeEmbedParams p{Matrix::Zero(8, 2), Matrix::Zero(3, 3), Matrix::Zero(3, 4)};
  EXPECT_EQ(init_node_embedding(tr.tasks[1], scaler, p), RowVector::Zero(9));
}

TEST(Embedding, IdentityProjectionsExposeNormalizedFeatures) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 3.0, 0, {0.2, 0.4}), task(2, 2.0, 4.0, 9.0, 1, {0.7, 0.1}),
                            task(3, 4.0, 4.0, 5.0)});
  const auto scaler = FeatureScaler::fit(tr);
  NodeEmbedParams p{Matrix::Zero(4, 0), Matrix::Identity(3, 3), Matrix::Identity(3, 3)};
  const RowVector h = init_node_embedding(tr.tasks[1], scaler, p);
  // priority 2 of max 2; submit 2 in [0, 4]; wait 2 in [0, 2]; run 5 in [1, 5].
  RowVector expected(6);
  expected << 0.7, 0.1, 1.0, 0.5, 1.0, 1.0;
  EXPECT_LE((h - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Embedding, MatchesStraightLineOracle) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 3.0, 0, {0.2, 0.4}), task(1030, 2.0, 4.0, 9.0, 1, {0.7, 0.1})});
  Rng rng(9);
  NodeEmbedParams p{random_matrix(rng, 1024, 2), random_matrix(rng, 3, 3), random_matrix(rng, 3, 2)};
  const auto scaler = FeatureScaler::fit(tr);
  const TaskRecord& r = tr.tasks[1];
  // Hand-written: bucket 1030 mod 1024 = 6.
  const double xr[3] = {0.7, 0.1, 1.0};
  const double xt[3] = {1.0, 1.0, 1.0};
  std::vector<double> expected{p.task_embed_table(6, 0), p.task_embed_table(6, 1)};
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += xr[k] * p.res_proj(k, c);
    expected.push_back(s);
  }
  for (int c = 0; c < 2; ++c) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += xt[k] * p.time_proj(k, c);
    expected.push_back(s);
  }
  const RowVector h = init_node_embedding(r, scaler, p);
  ASSERT_EQ(h.size(), 7);
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(h(j), expected[static_cast<std::size_t>(j)], 1e-12);
  EXPECT_EQ(task_bucket(-1, 1024), 1023);
}

TEST(Edges, SingleTaskHasNone) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 3.0)});
  EXPECT_TRUE(build_edges(tr, all(tr), {}).empty());
}

TEST(Edges, OverlapOnSameNodeIsSharedResourceBothWays) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 5.0, 0), task(2, 50.0, 50.0, 60.0, 1), task(3, 0.0, 4.0, 8.0, 0)});
  // Local order after sorting: task 1, task 3, task 2.
  const auto e = build_edges(tr, all(tr), {2, 1.0});
  const std::vector<EdgeCandidate> expected{{0, 1, EdgeKind::kSharedResource}, {1, 0, EdgeKind::kSharedResource}};
  EXPECT_EQ(e, expected);
}

TEST(Edges, FarApartOnDifferentNodesHaveNone) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 2.0, 0), task(2, 100.0, 100.0, 101.0, 1)});
  EXPECT_TRUE(build_edges(tr, all(tr), {2, 1.0}).empty());
}

TEST(Edges, SequentialFollowsNextKOnNode) {
  const auto tr = trace_of({task(1, 0.0, 0.0, 1.0, 0), task(2, 10.0, 10.0, 11.0, 0), task(3, 20.0, 20.0, 21.0, 0),
                            task(4, 30.0, 30.0, 31.0, 0)});
  const auto e = build_edges(tr, all(tr), {2, 0.5});
  const std::vector<EdgeCandidate> expected{{0, 1, EdgeKind::kSequential}, {0, 2, EdgeKind::kSequential},
                                            {1, 2, EdgeKind::kSequential}, {1, 3, EdgeKind::kSequential},
                                            {2, 3, EdgeKind::kSequential}};
  EXPECT_EQ(e, expected);
}

TEST(Edges, DedupKeepsHighestPrecedenceAndIsDeterministic) {
  // Same node, overlapping and submitted together: shared_resource beats coexistence.
  const auto tr = trace_of({task(1, 0.0, 0.0, 5.0, 0), task(2, 0.5, 1.0, 3.0, 0), task(3, 0.7, 0.7, 2.0, 1)});
  const auto e = build_edges(tr, all(tr), {2, 1.0});
  for (const auto& x : e) {
    if ((x.src == 0 && x.dst == 1) || (x.src == 1 && x.dst == 0)) EXPECT_EQ(x.kind, EdgeKind::kSharedResource);
    if (x.src == 2 || x.dst == 2) EXPECT_EQ(x.kind, EdgeKind::kCoexistence);
    EXPECT_NE(x.src, x.dst);
  }
  EXPECT_EQ(e.size(), 6u);
  EXPECT_EQ(build_edges(tr, all(tr), {2, 1.0}), e);
}

TEST(TemporalBias, Examples) {
  const auto a = task(1, 0.0, 0.0, 1.0);
  const auto b = task(2, 10.0, 10.0, 11.0);
  EXPECT_EQ(temporal_bias(a, a, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(temporal_bias(a, b, 10.0), -1.0);
  EXPECT_NEAR(temporal_bias(a, b, 1e15), 0.0, 1e-13);
  EXPECT_LE(temporal_bias(a, b, 3.0), temporal_bias(a, task(3, 5.0, 5.0, 6.0), 3.0));
}

TEST(Attention, UniformWhenWeightsZero) {
  const Matrix h = Matrix::Ones(3, 2);
  const std::vector<EdgeCandidate> edges{{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}};
  const auto a = edge_attention(h, edges, {Matrix::Zero(2, 2), Matrix::Zero(2, 2), 1.0}, std::vector<double>{0, 0});
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
}

TEST(Attention, HandEvaluatedExample) {
  // Oracle: tests/oracles/derive.py, logits (1/sqrt 2, 0).
  Matrix h(3, 2);
  h << 1, 0, 1, 0, 0, 1;
  const std::vector<EdgeCandidate> edges{{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}};
  const auto a = edge_attention(h, edges, {Matrix::Identity(2, 2), Matrix::Identity(2, 2), 1.0},
                                std::vector<double>{0, 0});
  EXPECT_NEAR(a[0], 0.6697615493266569, 1e-9);
  EXPECT_NEAR(a[1], 0.3302384506733431, 1e-9);
}

TEST(Attention, RowsAreSimplexAndBiasShiftInvariant) {
  Rng rng(3);
  const Matrix h = random_matrix(rng, 5, 4);
  std::vector<EdgeCandidate> edges;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j && (i + j) % 2 == 1) edges.push_back({i, j, EdgeKind::kCoexistence});
  std::vector<double> bias, shifted;
  for (const auto& e : edges) {
    bias.push_back(-0.3 * static_cast<double>(e.dst));
    shifted.push_back(bias.back() + (e.src == 2 ? 7.5 : 0.0));
  }
  const AttentionParams p{random_matrix(rng, 4, 4), random_matrix(rng, 4, 4), 1.0};
  const auto a = edge_attention(h, edges, p, bias);
  const auto b = edge_attention(h, edges, p, shifted);
  std::vector<double> rows(5, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    rows[edges[e].src] += a[e];
    EXPECT_GT(a[e], 0.0);
    EXPECT_NEAR(a[e], b[e], 1e-12);
  }
  for (double r : rows) EXPECT_NEAR(r, 1.0, 1e-9);
}

TEST(Attention, NonFiniteLogitNamesEdge) {
  Matrix h(2, 1);
  h << 1e200, 1e200;
  const std::vector<EdgeCandidate> edges{{0, 1, EdgeKind::kCoexistence}};
  try {
    edge_attention(h, edges, {Matrix::Identity(1, 1), Matrix::Identity(1, 1), 1.0}, std::vector<double>{0});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("0->1"), std::string::npos) << e.what();
  }
}

TEST(Fusion, IdentityAtPureSelfWeight) {
  const auto cur = graph_with({0, 1, 2}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kSequential}},
                              {0.3, 0.7});
  const auto prev = graph_with({0, 1}, {{0, 1, EdgeKind::kCoexistence}, {1, 0, EdgeKind::kCoexistence}}, {1.0, 1.0});
  const auto out = fuse_slices(&prev, cur, &prev, {0.0, 1.0, 0.0});
  EXPECT_EQ(out.edges, cur.edges);
  EXPECT_EQ(out.alpha, cur.alpha);
  EXPECT_EQ(out.nodes, cur.nodes);
}

TEST(Fusion, BoundarySliceIsUnchanged) {
  const auto cur = graph_with({4, 5, 6}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kSequential},
                                          {2, 1, EdgeKind::kSequential}},
                              {0.25, 0.75, 1.0});
  const auto out = fuse_slices(nullptr, cur, nullptr, {});
  EXPECT_EQ(out.edges, cur.edges);
  for (std::size_t e = 0; e < cur.alpha.size(); ++e) EXPECT_NEAR(out.alpha[e], cur.alpha[e], 1e-15);
}

TEST(Fusion, SharedEdgeBlendBeforeRenormalization) {
  // Node 0 -> 1 appears in prev with 0.2 and in cur with 0.6; the rest of
  // each row keeps the oracle visible: (0.5*0.2 + 0.5*0.6) / 1 = 0.4.
  const auto prev = graph_with({10, 11, 12}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}},
                               {0.2, 0.8});
  const auto cur = graph_with({10, 11, 13}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}},
                              {0.6, 0.4});
  const auto out = fuse_slices(&prev, cur, nullptr, {0.5, 0.5, 0.0});
  ASSERT_EQ(out.edges.size(), 2u);
  // Edge 0->1 blended to 0.4; edge 0->2 (task 13) only in cur: 0.5*0.4/0.5 = 0.4;
  // renormalized row: 0.5 / 0.5.
  EXPECT_NEAR(out.alpha[0], 0.5, 1e-12);
  EXPECT_NEAR(out.alpha[1], 0.5, 1e-12);
  const auto solo = fuse_slices(&prev, graph_with({10, 11}, {{0, 1, EdgeKind::kCoexistence}}, {0.6}), nullptr,
                                {0.5, 0.5, 0.0});
  EXPECT_NEAR(solo.alpha[0], 1.0, 1e-12);
}

TEST(Fusion, SharedEdgeBlendWhenRowAlreadySumsToOne) {
  // Blended row (0.4, 0.6) already sums to one, so renormalization keeps 0.4.
  const auto prev = graph_with({10, 11, 12}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}},
                               {0.2, 0.8});
  const auto cur = graph_with({10, 11, 12}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}},
                              {0.6, 0.4});
  const auto out = fuse_slices(&prev, cur, nullptr, {0.5, 0.5, 0.0});
  ASSERT_EQ(out.edges.size(), 2u);
  EXPECT_NEAR(out.alpha[0], 0.4, 1e-12);
  EXPECT_NEAR(out.alpha[1], 0.6, 1e-12);
}

TEST(Fusion, RowsStaySimplex) {
  const auto prev = graph_with({1, 2, 3}, {{0, 1, EdgeKind::kSequential}, {0, 2, EdgeKind::kSequential},
                                           {1, 2, EdgeKind::kSequential}},
                               {0.9, 0.1, 1.0});
  const auto cur = graph_with({2, 3, 4}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence},
                                          {2, 0, EdgeKind::kCoexistence}},
                              {0.3, 0.7, 1.0});
  const auto next = graph_with({3, 4, 2}, {{0, 1, EdgeKind::kCoexistence}, {1, 2, EdgeKind::kCoexistence}},
                               {1.0, 1.0});
  const auto out = fuse_slices(&prev, cur, &next, {0.25, 0.5, 0.25});
  std::vector<double> rows(3, 0.0);
  for (std::size_t e = 0; e < out.edges.size(); ++e) rows[out.edges[e].src] += out.alpha[e];
  for (double r : rows) EXPECT_NEAR(r, 1.0, 1e-9);
  // prev's 1 -> 2 edge (tasks 2 -> 3) becomes cur's 0 -> 1 and keeps the higher-precedence kind.
  EXPECT_EQ(out.edges[0].kind, EdgeKind::kSequential);
}

TEST(Fusion, AllZeroWeightsRejected) {
  EXPECT_THROW(validate(FusionWeights{0.0, 0.0, 0.0}), ValidationError);
  EXPECT_THROW(validate(FusionWeights{0.5, 0.6, 0.0}), ValidationError);
  EXPECT_THROW(validate(FusionWeights{-0.1, 1.1, 0.0}), ValidationError);
  const auto g = graph_with({1, 2}, {{0, 1, EdgeKind::kCoexistence}}, {1.0});
  // mu only on an absent neighbour leaves nothing to blend.
  EXPECT_TRUE(fuse_slices(nullptr, g, nullptr, {1.0, 0.0, 0.0}).edges.empty());
}

TEST(NeighborPrior, Examples) {
  const auto g = graph_with({0, 1, 2, 3}, {{0, 1, EdgeKind::kCoexistence}, {0, 2, EdgeKind::kCoexistence}},
                            {0.25, 0.75});
  Matrix p(4, 2);
  p << 0.5, 0.5, 1, 0, 0, 1, 0.3, 0.7;
  const Matrix q = neighbor_prior(p, g);
  EXPECT_NEAR(q(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(q(0, 1), 0.75, 1e-12);
  EXPECT_EQ(q.row(3), p.row(3));
  const Matrix same = Matrix::Constant(4, 2, 0.5);
  EXPECT_LE((neighbor_prior(same, g) - same).cwiseAbs().maxCoeff(), 1e-15);
  Matrix bad = p;
  bad(1, 0) = 0.9;
  EXPECT_THROW(neighbor_prior(bad, g), ValidationError);
}

TEST(GraphLoss, Examples) {
  auto g = graph_with({0, 1}, {{0, 1, EdgeKind::kCoexistence}}, {1.0});
  Matrix h(2, 2);
  h << 3, 4, 0, 0;
  const Matrix p = Matrix::Constant(2, 2, 0.5);
  EXPECT_DOUBLE_EQ(graph_loss(h, g, p, p, 1.0, 0.0), 25.0);
  EXPECT_NEAR(graph_loss(Matrix::Ones(2, 2), g, p, p, 1.0, 1.0), 0.0, 1e-15);
  Matrix p1(2, 2), p2(2, 2);
  p1 << 0.25, 0.75, 0.5, 0.5;
  p2 << 0.5, 0.5, 0.5, 0.5;
  EXPECT_NEAR(graph_loss(Matrix::Ones(2, 2), g, p1, p2, 0.0, 1.0), 0.13081203594113697, 1e-9);
  EXPECT_GE(graph_loss(h, g, p1, p2, 0.3, 0.7), 0.0);
  EXPECT_THROW(graph_loss(h, g, p, p, -1.0, 0.0), ValidationError);
}

TEST(GraphDump, NodeAndEdgeLines) {
  const auto tr = trace_of({task(1, 0.0, 1.0, 5.0, 0), task(2, 0.5, 4.0, 8.0, 0)});
  auto g = graph_with({0, 1}, {{0, 1, EdgeKind::kSharedResource}, {1, 0, EdgeKind::kSharedResource}}, {1.0, 1.0});
  g.slice_index = 3;
  std::ostringstream out;
  write_graph_dump(tr, g, out);
  std::istringstream in(out.str());
  std::string line;
  int nodes = 0, edges = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["slice"], 3);
    if (j["kind"] == "node") ++nodes;
    if (j["kind"] == "edge") {
      ++edges;
      EXPECT_EQ(j["edge_kind"], "shared_resource");
      EXPECT_EQ(j["alpha"], 1.0);
    }
  }
  EXPECT_EQ(nodes, 2);
  EXPECT_EQ(edges, 2);
}
