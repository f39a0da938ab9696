#include "schedgraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "schedgraph/error.hpp"

namespace schedgraph {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& [name, e] : max_rel_error) w = std::max(w, e);
  return w;
}

std::string GradCheckReport::worst_param() const {
  std::string name;
  double w = -1.0;
  for (const auto& [n, e] : max_rel_error)
    if (e > w) {
      w = e;
      name = n;
    }
  return name;
}

namespace {

double evaluate(const LossFn& loss_fn, ParamStore& store) {
  Tape tape;
  return loss_fn(tape, store).scalar();
}

}  // namespace

GradCheckReport check_gradients(const LossFn& loss_fn, ParamStore& store, double epsilon,
                                double tolerance) {
  if (!(epsilon > 0.0)) throw ValidationError("check_gradients: epsilon must be positive");

  const double base = evaluate(loss_fn, store);
  if (evaluate(loss_fn, store) != base)
    throw ContractError("check_gradients: loss function is not deterministic");

  store.reset_grads();
  {
    Tape tape;
    tape.backward(loss_fn(tape, store));
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& [name, p] : store) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      double& theta = p.value.data()[k];
      const double saved = theta;
      theta = saved + epsilon;
      const double up = evaluate(loss_fn, store);
      theta = saved - epsilon;
      const double down = evaluate(loss_fn, store);
      theta = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p.grad.data()[k];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error[name] = worst;
  }
  report.passed = report.worst() < tolerance;
  return report;
}

}  // namespace schedgraph
