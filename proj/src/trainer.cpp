#include "schedgraph/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "schedgraph/error.hpp"
#include "schedgraph/rng.hpp"

namespace schedgraph {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ValidationError("train.learning_rate must be > 0");
  if (!(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) throw ValidationError("train.dropout_p must be in [0, 1)");
  if (c.batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (c.eval_every < 1) throw ValidationError("train.eval_every must be >= 1");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  const LossWeights& w = c.loss;
  if (w.lambda1 < 0.0 || w.lambda2 < 0.0 || w.gamma1 < 0.0 || w.gamma2 < 0.0)
    throw ValidationError("train loss weights must be >= 0");
}

Adam::Adam(double learning_rate, double weight_decay, double beta1, double beta2, double eps)
    : lr_(learning_rate), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(lr_ > 0.0)) throw ValidationError("Adam: learning rate must be > 0");
  if (!(wd_ >= 0.0)) throw ValidationError("Adam: weight decay must be >= 0");
}

void Adam::step(ParamStore& store) {
  if (store.backward_passes() == 0 || (seen_backward_ && *seen_backward_ == store.backward_passes()))
    throw ContractError("Adam::step called without a fresh backward pass");
  seen_backward_ = store.backward_passes();
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, p] : store) {
    auto [mit, m_new] = m_.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = b1_ * m + (1.0 - b1_) * p.grad;
    v = b2_ * v + (1.0 - b2_) * p.grad.cwiseProduct(p.grad);
    if (wd_ > 0.0) p.value -= lr_ * wd_ * p.value;
    p.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

namespace {

void add_samples(const GraphSequence& seq, std::size_t index, std::vector<SampleRef>& out) {
  for (std::size_t t : seq.samples) out.push_back({index, t});
}

}  // namespace

Dataset make_dataset(const std::vector<ScheduleTrace>& train, const std::vector<ScheduleTrace>& val,
                     const GraphConfig& graph, const ModelConfig& model) {
  Dataset d;
  for (const auto& t : train) {
    d.sequences.push_back(prepare_sequence(t, graph, model));
    add_samples(d.sequences.back(), d.sequences.size() - 1, d.train);
  }
  for (const auto& t : val) {
    d.sequences.push_back(prepare_sequence(t, graph, model));
    add_samples(d.sequences.back(), d.sequences.size() - 1, d.val);
  }
  return d;
}

Dataset make_temporal_split(const ScheduleTrace& trace, double val_fraction, const GraphConfig& graph,
                            const ModelConfig& model) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ValidationError("train.val_fraction must be in [0, 1)");
  Dataset d;
  d.sequences.push_back(prepare_sequence(trace, graph, model));
  const auto& samples = d.sequences.front().samples;
  const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(samples.size())));
  const std::size_t cut = samples.size() - std::min(n_val, samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) (i < cut ? d.train : d.val).push_back({0, samples[i]});
  return d;
}

void write_train_log(const TrainLog& log, std::ostream& out) {
  out << "epoch,loss_total,loss_ce,loss_graph,loss_msgsa,val_precision,val_recall,val_f1,val_auc\n";
  for (const auto& e : log.epochs) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g}", e.epoch, e.loss_total, e.loss_ce, e.loss_graph,
                       e.loss_msgsa);
    if (e.val)
      out << fmt::format(",{:.10g},{:.10g},{:.10g},{:.10g}\n", e.val->precision, e.val->recall, e.val->f1,
                         e.val->auc);
    else
      out << ",,,,\n";
  }
}

std::vector<ScoredSample> score_samples(ParamStore& params, const Dataset& data,
                                        const std::vector<SampleRef>& samples, const ModelConfig& model) {
  std::vector<ScoredSample> out;
  for (const auto& s : samples) {
    const GraphSequence& seq = data.sequences.at(s.sequence);
    const Vector p = forward_score(params, seq, s.slice, model);
    const SliceData& slice = seq.slices[s.slice];
    for (std::size_t i = 0; i < slice.size(); ++i)
      out.push_back({slice.task_ids[i], slice.slice_index, p(static_cast<Eigen::Index>(i)), slice.labels[i]});
  }
  return out;
}

MetricsReport evaluate(ParamStore& params, const Dataset& data, const std::vector<SampleRef>& samples,
                       const ModelConfig& model, double threshold) {
  const auto scored = score_samples(params, data, samples, model);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : scored) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  return compute_metrics(scores, labels, threshold);
}

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  validate(config);
  validate(model);
  TrainResult result{init_params(model, config.seed), {}};
  if (config.epochs == 0) return result;
  if (data.train.empty()) throw ValidationError("training split is empty");

  ParamStore& params = result.params;
  Adam adam(config.learning_rate, config.weight_decay);
  Rng shuffle_rng(derive_seed(config.seed, SeedStream::kShuffle));
  std::vector<std::size_t> order(data.train.size());
  std::uint64_t draw = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      params.reset_grads();
      try {
        for (std::size_t b = start; b < end; ++b) {
          const SampleRef& ref = data.train[order[b]];
          const GraphSequence& seq = data.sequences[ref.sequence];
          Tape tape;
          std::optional<DropoutSpec> dropout;
          if (config.dropout_p > 0.0)
            dropout = DropoutSpec{config.dropout_p, derive_seed(config.seed, SeedStream::kDropout, draw)};
          ++draw;
          const ForwardPass fp = forward(tape, params, seq, ref.slice, model, dropout);
          const LossParts parts =
              total_loss(tape, fp, seq.slices[ref.slice], seq.fused[ref.slice], model, config.loss);
          const double total = parts.total.scalar();
          if (!std::isfinite(total)) throw NumericError("non-finite loss");
          log.loss_total += total;
          log.loss_ce += parts.ce;
          log.loss_graph += parts.graph;
          log.loss_msgsa += parts.msgsa;
          tape.backward(scale(parts.total, inv));
        }
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("training diverged at epoch {} batch {}: {}", epoch, batch, e.what()));
      }
      adam.step(params);
      for (const auto& [name, p] : params)
        if (!p.value.allFinite())
          throw NumericError(fmt::format("training diverged at epoch {} batch {}: parameter {} is not finite",
                                         epoch, batch, name));
    }
    const double n = static_cast<double>(order.size());
    log.loss_total /= n;
    log.loss_ce /= n;
    log.loss_graph /= n;
    log.loss_msgsa /= n;
    if (!data.val.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs))
      log.val = evaluate(params, data, data.val, model);
    spdlog::debug("epoch {} loss {:.6f}{}", epoch, log.loss_total,
                  log.val ? fmt::format(" val auc {:.4f}", log.val->auc) : std::string());
    if (on_epoch) on_epoch(log);
    result.log.epochs.push_back(std::move(log));
  }
  return result;
}

}  // namespace schedgraph
