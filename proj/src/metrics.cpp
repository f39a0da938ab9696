#include "schedgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "schedgraph/error.hpp"

namespace schedgraph {

namespace {

void check_input(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw ValidationError("metrics need at least one sample");
  if (scores.size() != labels.size())
    throw ValidationError("metrics: " + std::to_string(scores.size()) + " scores but " +
                          std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0))
      throw ValidationError("metrics: score " + std::to_string(i) + " is outside [0, 1]");
    if (labels[i] != 0 && labels[i] != 1)
      throw ValidationError("metrics: label " + std::to_string(i) + " is not 0 or 1");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

double rank_auc(std::span<const double> scores, std::span<const int> labels) {
  check_input(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mid-ranks over tie groups give the half credit.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_sum += mid;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double p = static_cast<double>(n_pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold) {
  check_input(scores, labels);
  if (!std::isfinite(threshold)) throw ValidationError("metrics: threshold must be finite");
  MetricsReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      ++(pred ? r.tp : r.fn);
    else
      ++(pred ? r.fp : r.tn);
  }
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = f1_score(r.precision, r.recall);
  r.auc = rank_auc(scores, labels);

  // Sweep cuts from the highest score down; each distinct score is a candidate.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t total_pos = r.tp + r.fn;
  std::size_t tp = 0, fp = 0;
  r.best_f1 = -1.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      ++(labels[order[j]] == 1 ? tp : fp);
      ++j;
    }
    const double f = f1_score(ratio(tp, tp + fp), ratio(tp, total_pos));
    if (f > r.best_f1) {
      r.best_f1 = f;
      r.best_f1_threshold = scores[order[i]];
    }
    i = j;
  }
  return r;
}

}  // namespace schedgraph
