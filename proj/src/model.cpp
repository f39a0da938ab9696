#include "schedgraph/model.hpp"

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "schedgraph/error.hpp"
#include "schedgraph/rng.hpp"

namespace schedgraph {

EdgeRuleConfig GraphConfig::rules() const {
  return {seq_k, coexist_eps.value_or(window_len / 10.0)};
}

double GraphConfig::tau_value() const { return tau.value_or(window_len); }

void validate(const GraphConfig& c) {
  if (!(c.window_len > 0.0) || !(c.stride > 0.0))
    throw ValidationError("graph.window_len and graph.stride must be positive");
  if (c.coexist_eps && *c.coexist_eps < 0.0) throw ValidationError("graph.coexist_eps must be >= 0");
  if (!(c.tau_value() > 0.0)) throw ValidationError("graph.tau must be positive");
  validate(c.mu);
}

ScaleConfig ModelConfig::effective_scales() const {
  if (!use_msgsa) return ScaleConfig{{1}};
  return scales;
}

void validate(const ModelConfig& c) {
  if (c.d() == 0) throw ValidationError("model dimension d must be positive");
  if (c.d_task > 0 && c.hash_buckets == 0) throw ValidationError("model.hash_buckets must be positive");
  if (c.n_resources == 0) throw ValidationError("model.n_resources must be positive");
  validate(c.scales);
}

// ---------------------------------------------------------------- preparation

namespace {

SliceData make_slice(const ScheduleTrace& trace, const FeatureScaler& scaler,
                     const std::vector<std::size_t>& nodes, std::size_t slice_index,
                     const GraphConfig& graph, const ModelConfig& model) {
  SliceData s;
  s.slice_index = slice_index;
  s.nodes = nodes;
  const auto n = static_cast<Eigen::Index>(nodes.size());
  s.x_res.resize(n, static_cast<Eigen::Index>(model.n_resources + 1));
  s.x_time.resize(n, 3);
  s.edge_mask = Matrix::Zero(n, n);
  s.bias = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TaskRecord& t = trace.tasks[nodes[static_cast<std::size_t>(i)]];
    if (t.resource_demand.size() != model.n_resources)
      throw ValidationError("task " + std::to_string(t.task_id) + " has " +
                            std::to_string(t.resource_demand.size()) +
                            " resource dimensions, model expects " + std::to_string(model.n_resources));
    s.task_ids.push_back(t.task_id);
    s.labels.push_back(t.anomalous() ? 1 : 0);
    s.buckets.push_back(model.d_task > 0
                            ? task_bucket(t.task_id, static_cast<Eigen::Index>(model.hash_buckets))
                            : 0);
    s.x_res.row(i) = scaler.resource_features(t);
    s.x_time.row(i) = scaler.time_features(t);
  }
  if (n == 0) return s;
  s.edges = build_edges(trace, nodes, graph.rules());
  const double tau = graph.tau_value();
  for (const auto& e : s.edges) {
    const auto a = static_cast<Eigen::Index>(e.src);
    const auto b = static_cast<Eigen::Index>(e.dst);
    s.edge_mask(a, b) = 1.0;
    s.bias(a, b) = temporal_bias(trace.tasks[nodes[e.src]], trace.tasks[nodes[e.dst]], tau);
  }
  return s;
}

std::vector<Eigen::Index> index_into(const SliceData& cur, const SliceData* other) {
  std::vector<Eigen::Index> idx(cur.size(), -1);
  if (other == nullptr) return idx;
  std::unordered_map<std::size_t, Eigen::Index> pos;
  for (std::size_t i = 0; i < other->nodes.size(); ++i) pos.emplace(other->nodes[i], static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (auto it = pos.find(cur.nodes[i]); it != pos.end()) idx[i] = it->second;
  return idx;
}

FusedStructure make_fused(const SliceData& cur, const SliceData* prev, const SliceData* next,
                          const GraphConfig& graph, const ModelConfig& model) {
  FusedStructure f;
  const auto n = static_cast<Eigen::Index>(cur.size());
  f.inv_denom = Matrix::Zero(n, n);
  f.keep_rows.assign(cur.size(), 1);
  f.uniform_alpha = Matrix::Zero(n, n);
  {
    const auto u = uniform_edge_weights(cur.size(), cur.edges);
    for (std::size_t e = 0; e < cur.edges.size(); ++e)
      f.uniform_alpha(static_cast<Eigen::Index>(cur.edges[e].src),
                      static_cast<Eigen::Index>(cur.edges[e].dst)) = u[e];
  }

  if (!model.use_gsg) {
    f.edges = cur.edges;
    f.inv_denom = cur.edge_mask;
  } else {
    const FusionWeights& mu = graph.mu;
    f.use_prev = prev != nullptr && prev->size() > 0 && mu.prev > 0.0;
    f.use_next = next != nullptr && next->size() > 0 && mu.next > 0.0;
    f.prev_index = index_into(cur, f.use_prev ? prev : nullptr);
    f.next_index = index_into(cur, f.use_next ? next : nullptr);
    f.mu_prev = f.use_prev ? mu.prev : 0.0;
    f.mu_self = mu.self;
    f.mu_next = f.use_next ? mu.next : 0.0;

    struct View {
      const SliceData* s;
      double mu;
      const std::vector<Eigen::Index>* index;  // nullptr for cur
    };
    std::vector<View> views;
    if (f.use_prev) views.push_back({prev, mu.prev, &f.prev_index});
    if (mu.self > 0.0) views.push_back({&cur, mu.self, nullptr});
    if (f.use_next) views.push_back({next, mu.next, &f.next_index});

    auto local_of = [](const View& v, std::size_t i) -> Eigen::Index {
      return v.index == nullptr ? static_cast<Eigen::Index>(i) : (*v.index)[i];
    };
    std::map<std::pair<std::size_t, std::size_t>, EdgeKind> kinds;
    // Edge kinds follow every neighbouring slice, weights only those with mu > 0.
    auto offer = [&](const SliceData* s, const std::vector<Eigen::Index>* index) {
      if (s == nullptr) return;
      std::unordered_map<Eigen::Index, std::size_t> back;
      for (std::size_t i = 0; i < cur.size(); ++i) {
        const Eigen::Index l = index == nullptr ? static_cast<Eigen::Index>(i) : (*index)[i];
        if (l >= 0) back.emplace(l, i);
      }
      for (const auto& e : s->edges) {
        auto a = back.find(static_cast<Eigen::Index>(e.src));
        auto b = back.find(static_cast<Eigen::Index>(e.dst));
        if (a == back.end() || b == back.end()) continue;
        auto [it, inserted] = kinds.emplace(std::make_pair(a->second, b->second), e.kind);
        if (!inserted && e.kind < it->second) it->second = e.kind;
      }
    };
    const auto prev_all = index_into(cur, prev);
    const auto next_all = index_into(cur, next);
    offer(prev, &prev_all);
    offer(&cur, nullptr);
    offer(next, &next_all);

    for (const auto& [key, kind] : kinds) {
      double denom = 0.0;
      bool from_edge = false;
      bool only_cur = true;
      for (const auto& v : views) {
        const Eigen::Index a = local_of(v, key.first);
        const Eigen::Index b = local_of(v, key.second);
        if (a < 0 || b < 0) continue;
        denom += v.mu;
        if (v.s != &cur) only_cur = false;
        if (v.s->edge_mask(a, b) != 0.0) from_edge = true;
      }
      if (!from_edge) continue;
      if (denom <= 0.0) throw ValidationError("fusion weights vanish for a fused edge");
      f.edges.push_back({key.first, key.second, kind});
      f.inv_denom(static_cast<Eigen::Index>(key.first), static_cast<Eigen::Index>(key.second)) = 1.0 / denom;
      if (!only_cur) f.keep_rows[key.first] = 0;
    }
  }

  SchedGraph topo;
  topo.slice_index = cur.slice_index;
  topo.nodes = cur.nodes;
  topo.edges = f.edges;
  topo.alpha.assign(f.edges.size(), 1.0);

  f.one_hop_self.resize(n, 1);
  f.one_hop_rest.resize(n, 1);
  f.isolated = Matrix::Ones(n, 1);
  for (const auto& e : f.edges) f.isolated(static_cast<Eigen::Index>(e.src), 0) = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ball = static_cast<double>(khop_neighborhood(topo, static_cast<std::size_t>(i), 1).size());
    f.one_hop_self(i, 0) = 1.0 / ball;
    f.one_hop_rest(i, 0) = 1.0 - 1.0 / ball;
  }
  for (int hops : model.effective_scales().hops)
    f.agg.push_back(hops == 1 ? Matrix() : aggregation_matrix(topo, hops));
  return f;
}

}  // namespace

GraphSequence prepare_sequence(const ScheduleTrace& trace, const GraphConfig& graph,
                               const ModelConfig& model) {
  validate(graph);
  validate(model);
  const SliceSet sliced = window_slice(trace, graph.window_len, graph.stride);
  const FeatureScaler scaler = FeatureScaler::fit(trace);
  GraphSequence seq;
  for (std::size_t t = 0; t < sliced.slices.size(); ++t)
    seq.slices.push_back(make_slice(trace, scaler, sliced.slices[t], t, graph, model));
  seq.fused.resize(seq.slices.size());
  for (std::size_t t = 0; t < seq.slices.size(); ++t) {
    if (seq.slices[t].size() == 0) continue;
    const SliceData* prev = t > 0 ? &seq.slices[t - 1] : nullptr;
    const SliceData* next = t + 1 < seq.slices.size() ? &seq.slices[t + 1] : nullptr;
    seq.fused[t] = make_fused(seq.slices[t], prev, next, graph, model);
    seq.samples.push_back(t);
  }
  return seq;
}

// ---------------------------------------------------------------- parameters

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

std::string scale_param(std::size_t k) { return "msgsa.agg." + std::to_string(k); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  const auto d = static_cast<Eigen::Index>(config.d());
  const auto da = static_cast<Eigen::Index>(config.attn_dim());
  const auto d_in_res = static_cast<Eigen::Index>(config.n_resources + 1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Every tensor draws from its own stream keyed by name, so configurations
  // that share a parameter also share its initial value.
  ParamStore store;
  auto draw = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Rng rng(derive_seed(seed, SeedStream::kParamInit, fnv1a(name)));
    store.add(name, gaussian(rng, rows, cols, stddev));
  };
  draw("embed.task", static_cast<Eigen::Index>(config.d_task > 0 ? config.hash_buckets : 0),
       static_cast<Eigen::Index>(config.d_task), 0.1);
  draw("embed.res", d_in_res, static_cast<Eigen::Index>(config.d_res), 1.0 / std::sqrt(static_cast<double>(d_in_res)));
  draw("embed.time", 3, static_cast<Eigen::Index>(config.d_time), 1.0 / std::sqrt(3.0));
  draw("attn.wq", d, d, inv_sqrt_d);
  draw("attn.wk", d, d, inv_sqrt_d);
  const auto scales = config.effective_scales();
  for (std::size_t k = 0; k < scales.size(); ++k) draw(scale_param(k), d, d, inv_sqrt_d);
  draw("msgsa.wa", da, d, inv_sqrt_d);
  store.add("msgsa.ba", Matrix::Zero(1, da));
  draw("msgsa.w", 1, da, 1.0 / std::sqrt(static_cast<double>(da)));
  draw("msgsa.wr", d, d, 0.1 * inv_sqrt_d);
  store.add("msgsa.br", Matrix::Zero(1, d));
  draw("head.wc", 2, d, inv_sqrt_d);
  store.add("head.bc", Matrix::Zero(1, 2));
  return store;
}

void check_compatible(const ParamStore& params, const ModelConfig& config) {
  const auto expected_d = static_cast<Eigen::Index>(config.d());
  if (!params.contains("head.wc"))
    throw ValidationError("checkpoint lacks parameter 'head.wc'");
  const auto actual_d = params.at("head.wc").value.cols();
  if (actual_d != expected_d)
    throw ValidationError("checkpoint dimension mismatch: expected d=" + std::to_string(expected_d) +
                          ", checkpoint has d=" + std::to_string(actual_d));
  const ParamStore reference = init_params(config, 0);
  for (const auto& [name, p] : reference) {
    if (!params.contains(name)) throw ValidationError("checkpoint lacks parameter '" + name + "'");
    const auto& v = params.at(name).value;
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
      throw ValidationError("checkpoint parameter '" + name + "' has shape " + std::to_string(v.rows()) +
                            "x" + std::to_string(v.cols()) + ", expected " + std::to_string(p.value.rows()) +
                            "x" + std::to_string(p.value.cols()));
  }
}

// ---------------------------------------------------------------- forward

Var embed_slice(Tape& tape, ParamStore& params, const SliceData& slice, const ModelConfig& config) {
  std::vector<Var> parts;
  if (config.d_task > 0) parts.push_back(select_rows(tape.param(params, "embed.task"), slice.buckets));
  parts.push_back(matmul(tape.constant(slice.x_res), tape.param(params, "embed.res")));
  parts.push_back(matmul(tape.constant(slice.x_time), tape.param(params, "embed.time")));
  return concat(parts);
}

Var slice_attention(Tape& tape, ParamStore& params, const SliceData& slice, const ModelConfig& config,
                    Var h0) {
  const Var q = matmul_t(h0, tape.param(params, "attn.wq"));
  const Var k = matmul_t(h0, tape.param(params, "attn.wk"));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.d()));
  const Var logits = add(scale(matmul_t(q, k), inv_sqrt_d), tape.constant(slice.bias));
  return masked_softmax_row(logits, slice.edge_mask);
}

ForwardPass forward(Tape& tape, ParamStore& params, const GraphSequence& seq, std::size_t slice_pos,
                    const ModelConfig& config, const std::optional<DropoutSpec>& dropout) {
  const SliceData& cur = seq.slices.at(slice_pos);
  const FusedStructure& fs = seq.fused.at(slice_pos);
  if (cur.size() == 0) throw ValidationError("forward: slice " + std::to_string(slice_pos) + " is empty");
  const auto n = static_cast<Eigen::Index>(cur.size());
  const auto d = static_cast<Eigen::Index>(config.d());

  ForwardPass fp;
  fp.h0 = embed_slice(tape, params, cur, config);

  if (config.use_gsg) {
    std::vector<Var> terms;
    if (fs.use_prev) {
      const SliceData& prev = seq.slices[slice_pos - 1];
      const Var a = slice_attention(tape, params, prev, config, embed_slice(tape, params, prev, config));
      terms.push_back(scale(gather(a, fs.prev_index, fs.prev_index), fs.mu_prev));
    }
    if (fs.mu_self > 0.0) terms.push_back(scale(slice_attention(tape, params, cur, config, fp.h0), fs.mu_self));
    if (fs.use_next) {
      const SliceData& next = seq.slices[slice_pos + 1];
      const Var a = slice_attention(tape, params, next, config, embed_slice(tape, params, next, config));
      terms.push_back(scale(gather(a, fs.next_index, fs.next_index), fs.mu_next));
    }
    Var blended = terms.empty() ? tape.constant(Matrix::Zero(n, n)) : terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) blended = add(blended, terms[k]);
    fp.alpha = row_normalize(mul_const(blended, fs.inv_denom), fs.keep_rows);
  } else {
    fp.alpha = tape.constant(fs.uniform_alpha);
  }

  // 1-hop operator: self weight 1/|N1| plus the rest spread by alpha + alpha^T.
  const Var sym = row_normalize(add(fp.alpha, transpose(fp.alpha)));
  const Var one_hop = add(tape.constant(Matrix(fs.one_hop_self.col(0).asDiagonal())),
                          scale_rows(sym, tape.constant(fs.one_hop_rest)));

  const ScaleConfig scales = config.effective_scales();
  Var h = fp.h0;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const Var a = scales.hops[k] == 1 ? one_hop : tape.constant(fs.agg[k]);
    h = tanh(matmul_t(matmul(a, h), tape.param(params, scale_param(k))));
    fp.h_scales.push_back(h);
  }

  const Var wa = tape.param(params, "msgsa.wa");
  const Var ba = tape.param(params, "msgsa.ba");
  const Var w = tape.param(params, "msgsa.w");
  std::vector<Var> scores;
  for (const Var& hk : fp.h_scales) scores.push_back(matmul_t(tanh(add_row(matmul_t(hk, wa), ba)), w));
  fp.beta = softmax_row(concat(scores));
  fp.h_fusion = scale_rows(fp.h_scales.front(), select_col(fp.beta, 0));
  for (std::size_t k = 1; k < fp.h_scales.size(); ++k)
    fp.h_fusion = add(fp.h_fusion, scale_rows(fp.h_scales[k], select_col(fp.beta, static_cast<Eigen::Index>(k))));

  Var fused = fp.h_fusion;
  if (dropout && dropout->p > 0.0) {
    Rng rng(dropout->seed);
    std::bernoulli_distribution keep(1.0 - dropout->p);
    Matrix mask(n, d);
    const double inv_keep = 1.0 / (1.0 - dropout->p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) mask(i, j) = keep(rng) ? inv_keep : 0.0;
    fused = mul_const(fused, mask);
  }

  if (config.effective_residual()) {
    const Var offset = add(matmul_t(mean_rows(fused), tape.param(params, "msgsa.wr")),
                           tape.param(params, "msgsa.br"));
    fp.h_final = add_row(fused, offset);
  } else {
    fp.h_final = fused;
  }

  const Var logits = add_row(matmul_t(fp.h_final, tape.param(params, "head.wc")), tape.param(params, "head.bc"));
  fp.probs = softmax_row(logits);
  return fp;
}

LossParts total_loss(Tape& tape, const ForwardPass& fp, const SliceData& slice,
                     const FusedStructure& fused, const ModelConfig& config,
                     const LossWeights& weights) {
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0 || weights.gamma1 < 0.0 || weights.gamma2 < 0.0)
    throw ValidationError("loss weights must be non-negative");
  LossParts parts;
  Var total = cross_entropy(fp.probs, slice.labels);
  parts.ce = total.scalar();

  if (config.use_gsg && (weights.lambda1 > 0.0 || weights.lambda2 > 0.0)) {
    Var lg = tape.scalar(0.0);
    if (weights.lambda1 > 0.0)
      lg = add(lg, scale(sum(mul(fp.alpha, pairwise_sqdist(fp.h0))), weights.lambda1));
    if (weights.lambda2 > 0.0) {
      const Var prior = add(matmul(fp.alpha, fp.probs), scale_rows(fp.probs, tape.constant(fused.isolated)));
      lg = add(lg, scale(kl_div(fp.probs, prior), weights.lambda2));
    }
    parts.graph = lg.scalar();
    total = add(total, lg);
  }

  if (config.use_msgsa && (weights.gamma1 > 0.0 || weights.gamma2 > 0.0)) {
    Var lm = tape.scalar(0.0);
    if (weights.gamma1 > 0.0)
      for (const Var& hk : fp.h_scales) lm = add(lm, scale(sum_sq(sub(hk, fp.h_fusion)), weights.gamma1));
    if (weights.gamma2 > 0.0) lm = add(lm, scale(sum_sq(sub(fp.h_final, fp.h0)), weights.gamma2));
    parts.msgsa = lm.scalar();
    total = add(total, lm);
  }
  parts.total = total;
  return parts;
}

Vector forward_score(ParamStore& params, const GraphSequence& seq, std::size_t slice_pos,
                     const ModelConfig& config, const std::optional<DropoutSpec>& dropout) {
  Tape tape;
  const ForwardPass fp = forward(tape, params, seq, slice_pos, config, dropout);
  return fp.probs.value().col(1);
}

}  // namespace schedgraph
