#include <gtest/gtest.h>

#include <cmath>

#include "schedgraph/error.hpp"
#include "schedgraph/experiments.hpp"
#include "schedgraph/graph.hpp"
#include "schedgraph/model.hpp"
#include "schedgraph/msgsa.hpp"
#include "schedgraph/rng.hpp"
#include "schedgraph/trainer.hpp"

using namespace schedgraph;

namespace {

struct Fixture {
  ScheduleTrace trace;
  GraphConfig graph;
  ModelConfig model;
};

Fixture small(std::uint64_t seed = 4) {
  Fixture f;
  GenConfig g;
  g.n_tasks = 24;
  g.n_nodes = 2;
  g.mean_interarrival = 1.0;
  g.seed = seed;
  f.trace = generate_trace(g);
  for (std::size_t i = 0; i < f.trace.tasks.size(); i += 3) f.trace.tasks[i].anomaly_label = AnomalyLabel::kTaskDelay;
  const double last = f.trace.last_submit();
  f.graph.window_len = 0.4 * last;
  f.graph.stride = 0.2 * last;
  f.model.d_task = 2;
  f.model.d_res = 3;
  f.model.d_time = 3;
  f.model.hash_buckets = 16;
  return f;
}

// Per-slice graph with its own attention weights, built without the tape.
SchedGraph plain_slice(const Fixture& f, const SliceData& s, const ParamStore& p) {
  const FeatureScaler scaler = FeatureScaler::fit(f.trace);
  const NodeEmbedParams ep{p.at("embed.task").value, p.at("embed.res").value, p.at("embed.time").value};
  SchedGraph g;
  g.slice_index = s.slice_index;
  g.nodes = s.nodes;
  g.h.resize(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(f.model.d()));
  for (std::size_t i = 0; i < s.size(); ++i)
    g.h.row(static_cast<Eigen::Index>(i)) = init_node_embedding(f.trace.tasks[s.nodes[i]], scaler, ep);
  g.edges = s.edges;
  std::vector<double> bias;
  for (const auto& e : s.edges)
    bias.push_back(temporal_bias(f.trace.tasks[s.nodes[e.src]], f.trace.tasks[s.nodes[e.dst]], f.graph.tau_value()));
  g.alpha = edge_attention(g.h, g.edges, {p.at("attn.wq").value, p.at("attn.wk").value, f.graph.tau_value()}, bias);
  return g;
}

Matrix reference_probs(const Fixture& f, const GraphSequence& seq, std::size_t t, const ParamStore& p) {
  const SchedGraph cur = plain_slice(f, seq.slices[t], p);
  std::optional<SchedGraph> prev, next;
  if (t > 0 && seq.slices[t - 1].size() > 0) prev = plain_slice(f, seq.slices[t - 1], p);
  if (t + 1 < seq.slices.size() && seq.slices[t + 1].size() > 0) next = plain_slice(f, seq.slices[t + 1], p);
  const SchedGraph fused = fuse_slices(prev ? &*prev : nullptr, cur, next ? &*next : nullptr, f.graph.mu);

  MsgsaParams mp;
  for (std::size_t k = 0; k < f.model.scales.size(); ++k)
    mp.w_scale.push_back(p.at("msgsa.agg." + std::to_string(k)).value);
  mp.wa = p.at("msgsa.wa").value;
  mp.ba = p.at("msgsa.ba").value;
  mp.w = p.at("msgsa.w").value;
  mp.wr = p.at("msgsa.wr").value;
  mp.br = p.at("msgsa.br").value;
  const auto ms = encode(fused, f.model.scales, mp, f.model.residual);

  Matrix logits = ms.h_final * p.at("head.wc").value.transpose();
  logits.rowwise() += RowVector(p.at("head.bc").value);
  Matrix probs(logits.rows(), 2);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - m).exp().matrix();
    probs.row(i) /= probs.row(i).sum();
  }
  return probs;
}

}  // namespace

TEST(Forward, MatchesStraightLineReference) {
  Fixture f = small();
  f.model.scales = ScaleConfig::up_to(2);
  const GraphSequence seq = prepare_sequence(f.trace, f.graph, f.model);
  ASSERT_GE(seq.samples.size(), 3u);
  ParamStore p = init_params(f.model, 17);
  // Non-zero residual bias so the path is exercised.
  p.at("msgsa.br").value.setConstant(0.05);
  p.at("head.bc").value(0, 1) = -0.2;
  int interior = 0;
  for (std::size_t t : seq.samples) {
    Tape tape;
    const ForwardPass fp = forward(tape, p, seq, t, f.model);
    const Matrix expected = reference_probs(f, seq, t, p);
    EXPECT_LE((fp.probs.value() - expected).cwiseAbs().maxCoeff(), 1e-12) << "slice " << t;
    if (seq.fused[t].use_prev && seq.fused[t].use_next) ++interior;
  }
  EXPECT_GT(interior, 0);
}

TEST(Forward, ZeroHeadGivesHalf) {
  Fixture f = small();
  const GraphSequence seq = prepare_sequence(f.trace, f.graph, f.model);
  ParamStore p = init_params(f.model, 3);
  p.at("head.wc").value.setZero();
  for (std::size_t t : seq.samples) {
    const Vector s = forward_score(p, seq, t, f.model);
    EXPECT_LE((s.array() - 0.5).abs().maxCoeff(), 1e-15);
  }
  // CE is ln 2 per node and nothing else contributes without auxiliary losses.
  const std::size_t t = seq.samples.front();
  Tape tape;
  const ForwardPass fp = forward(tape, p, seq, t, f.model);
  const LossParts lp = total_loss(tape, fp, seq.slices[t], seq.fused[t], f.model, {0, 0, 0, 0});
  EXPECT_NEAR(lp.total.scalar(), std::log(2.0) * static_cast<double>(seq.slices[t].size()), 1e-9);
  EXPECT_EQ(lp.graph, 0.0);
  EXPECT_EQ(lp.msgsa, 0.0);
}

TEST(Forward, ProbabilitiesAndBetaAreDistributions) {
  Fixture f = small(9);
  const GraphSequence seq = prepare_sequence(f.trace, f.graph, f.model);
  ParamStore p = init_params(f.model, 5);
  for (std::size_t t : seq.samples) {
    Tape tape;
    const ForwardPass fp = forward(tape, p, seq, t, f.model);
    for (Eigen::Index i = 0; i < fp.probs.value().rows(); ++i) {
      EXPECT_NEAR(fp.probs.value().row(i).sum(), 1.0, 1e-12);
      EXPECT_NEAR(fp.beta.value().row(i).sum(), 1.0, 1e-12);
    }
    const Matrix& a = fp.alpha.value();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double s = a.row(i).sum();
      EXPECT_TRUE(std::abs(s - 1.0) < 1e-9 || s == 0.0) << s;
    }
    const LossParts lp = total_loss(tape, fp, seq.slices[t], seq.fused[t], f.model, {});
    EXPECT_GE(lp.total.scalar(), 0.0);
    EXPECT_GE(lp.graph, 0.0);
    EXPECT_GE(lp.msgsa, 0.0);
    EXPECT_NEAR(lp.total.scalar(), lp.ce + lp.graph + lp.msgsa, 1e-9);
  }
}

TEST(Forward, ZeroDropoutMatchesNoDropout) {
  Fixture f = small();
  const GraphSequence seq = prepare_sequence(f.trace, f.graph, f.model);
  ParamStore p = init_params(f.model, 5);
  const std::size_t t = seq.samples[1];
  EXPECT_EQ(forward_score(p, seq, t, f.model), forward_score(p, seq, t, f.model, DropoutSpec{0.0, 77}));
  EXPECT_NE(forward_score(p, seq, t, f.model), forward_score(p, seq, t, f.model, DropoutSpec{0.5, 77}));
  EXPECT_EQ(forward_score(p, seq, t, f.model, DropoutSpec{0.5, 77}),
            forward_score(p, seq, t, f.model, DropoutSpec{0.5, 77}));
}

TEST(Forward, IdShiftIsInvisibleWithoutIdEmbedding) {
  Fixture f = small(12);
  f.model.d_task = 0;
  ScheduleTrace shifted = f.trace;
  for (auto& t : shifted.tasks) t.task_id += 1000;
  const GraphSequence a = prepare_sequence(f.trace, f.graph, f.model);
  const GraphSequence b = prepare_sequence(shifted, f.graph, f.model);
  ParamStore p = init_params(f.model, 5);
  for (std::size_t t : a.samples) EXPECT_EQ(forward_score(p, a, t, f.model), forward_score(p, b, t, f.model));
}

TEST(Toggles, SingleScaleMultiScaleEqualsBaseline) {
  Fixture f = small();
  ModelConfig base = f.model;
  LossWeights base_loss;
  apply_row(AblationRow::kBaseline, base, base_loss);
  ModelConfig ms = f.model;
  LossWeights ms_loss;
  apply_row(AblationRow::kMsgsa, ms, ms_loss);
  ms.scales = ScaleConfig{{1}};
  ms.residual = false;
  ms_loss.gamma1 = ms_loss.gamma2 = 0.0;

  const GraphSequence sb = prepare_sequence(f.trace, f.graph, base);
  const GraphSequence sm = prepare_sequence(f.trace, f.graph, ms);
  ParamStore pb = init_params(base, 8);
  ParamStore pm = init_params(ms, 8);
  ASSERT_TRUE(pb == pm);
  for (std::size_t t : sb.samples) {
    Tape tb, tm;
    const ForwardPass fb = forward(tb, pb, sb, t, base);
    const ForwardPass fm = forward(tm, pm, sm, t, ms);
    EXPECT_EQ(fb.probs.value(), fm.probs.value());
    EXPECT_EQ(total_loss(tb, fb, sb.slices[t], sb.fused[t], base, base_loss).total.scalar(),
              total_loss(tm, fm, sm.slices[t], sm.fused[t], ms, ms_loss).total.scalar());
  }

  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  tc.eval_every = 1;
  tc.seed = 5;
  tc.loss = base_loss;
  const TrainResult rb = train(make_temporal_split(f.trace, 0.25, f.graph, base), base, tc);
  tc.loss = ms_loss;
  const TrainResult rm = train(make_temporal_split(f.trace, 0.25, f.graph, ms), ms, tc);
  EXPECT_TRUE(rb.params == rm.params);
  ASSERT_EQ(rb.log.epochs.size(), rm.log.epochs.size());
  for (std::size_t e = 0; e < rb.log.epochs.size(); ++e) {
    EXPECT_EQ(rb.log.epochs[e].loss_total, rm.log.epochs[e].loss_total);
    EXPECT_EQ(rb.log.epochs[e].val->auc, rm.log.epochs[e].val->auc);
  }
}

TEST(Toggles, BaselineUsesUniformUnfusedWeights) {
  Fixture f = small();
  ModelConfig base = f.model;
  LossWeights loss;
  apply_row(AblationRow::kBaseline, base, loss);
  EXPECT_FALSE(base.use_gsg);
  EXPECT_FALSE(base.use_msgsa);
  EXPECT_EQ(loss.lambda1 + loss.lambda2 + loss.gamma1 + loss.gamma2, 0.0);
  const GraphSequence seq = prepare_sequence(f.trace, f.graph, base);
  ParamStore p = init_params(base, 2);
  for (std::size_t t : seq.samples) {
    Tape tape;
    const ForwardPass fp = forward(tape, p, seq, t, base);
    EXPECT_EQ(fp.alpha.value(), seq.fused[t].uniform_alpha);
    EXPECT_EQ(fp.h_scales.size(), 1u);
    EXPECT_EQ(seq.fused[t].edges, seq.slices[t].edges);
  }
}

TEST(Structure, GradcheckTraceFusesBothSlices) {
  GraphConfig g;
  const ScheduleTrace tr = gradcheck_trace(1, g);
  const GraphSequence seq = prepare_sequence(tr, g, ModelConfig{});
  ASSERT_EQ(seq.samples.size(), 2u);
  EXPECT_TRUE(seq.fused[0].use_next);
  EXPECT_TRUE(seq.fused[1].use_prev);
}

TEST(Checkpoints, CompatibilityNamesDimensions) {
  Fixture f = small();
  const ParamStore p = init_params(f.model, 1);
  EXPECT_NO_THROW(check_compatible(p, f.model));
  ModelConfig other = f.model;
  other.d_res = 5;
  try {
    check_compatible(p, other);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected d=10"), std::string::npos) << msg;
    EXPECT_NE(msg.find("has d=8"), std::string::npos) << msg;
  }
}

TEST(Slices, ResourceDimensionMismatchIsValidationError) {
  Fixture f = small();
  f.model.n_resources = 3;
  EXPECT_THROW(prepare_sequence(f.trace, f.graph, f.model), ValidationError);
}
