#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "schedgraph/metrics.hpp"
#include "schedgraph/model.hpp"
#include "schedgraph/tensor.hpp"
#include "schedgraph/workload.hpp"

namespace schedgraph {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;  // slice graphs per optimiser step
  std::size_t epochs = 300;
  double weight_decay = 1e-5;
  double dropout_p = 0.3;
  std::size_t eval_every = 10;
  LossWeights loss;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

// Adam with bias correction and decoupled weight decay
//   theta <- theta - lr * wd * theta, then the Adam update.
class Adam {
 public:
  explicit Adam(double learning_rate, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // Consumes the gradients currently in `store`. Throws ContractError when no
  // backward pass has reached the store since the previous step.
  void step(ParamStore& store);
  std::size_t steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::optional<std::size_t> seen_backward_;
  std::map<std::string, Matrix> m_, v_;
};

struct SampleRef {
  std::size_t sequence = 0;
  std::size_t slice = 0;
};

struct Dataset {
  std::vector<GraphSequence> sequences;
  std::vector<SampleRef> train;
  std::vector<SampleRef> val;
};

// Trace-level split: every non-empty slice of a train trace is a training
// sample, every non-empty slice of a val trace a validation sample.
Dataset make_dataset(const std::vector<ScheduleTrace>& train, const std::vector<ScheduleTrace>& val,
                     const GraphConfig& graph, const ModelConfig& model);

// Single-trace split: the last ceil(val_fraction * n) non-empty slices
// validate, the rest train. val_fraction == 0 leaves val empty.
Dataset make_temporal_split(const ScheduleTrace& trace, double val_fraction, const GraphConfig& graph,
                            const ModelConfig& model);

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0;  // means over training samples
  double loss_ce = 0.0;
  double loss_graph = 0.0;
  double loss_msgsa = 0.0;
  std::optional<MetricsReport> val;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

void write_train_log(const TrainLog& log, std::ostream& out);

struct TrainResult {
  ParamStore params;
  TrainLog log;
};

// Validation metrics are computed every eval_every epochs and after the last
// epoch. `on_epoch` (optional) sees every finished epoch.
TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct ScoredSample {
  std::int64_t task_id = 0;
  std::size_t slice = 0;
  double score = 0.0;
  int label = 0;
};

// Dropout-off class-1 probabilities for every node of the given samples, in
// sample order then node order.
std::vector<ScoredSample> score_samples(ParamStore& params, const Dataset& data,
                                        const std::vector<SampleRef>& samples, const ModelConfig& model);

MetricsReport evaluate(ParamStore& params, const Dataset& data, const std::vector<SampleRef>& samples,
                       const ModelConfig& model, double threshold = 0.5);

}  // namespace schedgraph
