#pragma once

#include <cstddef>
#include <span>

namespace schedgraph {

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double threshold = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  // Diagnostic: the cut that maximises F1 on this sample set.
  double best_f1_threshold = 0.5;
  double best_f1 = 0.0;

  std::size_t count() const { return tp + fp + tn + fn; }
};

// Harmonic mean, 0 when precision + recall == 0.
double f1_score(double precision, double recall);

// Mann-Whitney estimate of P(score_pos > score_neg), ties count one half.
// Returns 0.5 when only one class is present.
double rank_auc(std::span<const double> scores, std::span<const int> labels);

// Predictions are score >= threshold. Throws ValidationError on empty or
// mismatched input, scores outside [0, 1] or labels outside {0, 1}.
MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold = 0.5);

}  // namespace schedgraph
