#pragma once

#include <functional>
#include <map>
#include <string>

#include "schedgraph/tensor.hpp"

namespace schedgraph {

struct GradCheckReport {
  // Per parameter: max over coordinates of
  //   |analytic - numeric| / max(1, |analytic|, |numeric|).
  std::map<std::string, double> max_rel_error;
  double tolerance = 0.0;
  bool passed = false;

  double worst() const;
  std::string worst_param() const;
};

// Builds the scalar loss on a fresh tape from the current parameter values.
using LossFn = std::function<Var(Tape&, ParamStore&)>;

// Compares reverse-mode gradients against central differences
// (f(theta + eps) - f(theta - eps)) / 2 eps, coordinate by coordinate.
// The loss must be deterministic: two baseline evaluations that disagree
// raise ContractError. Parameter values are restored on return; gradients
// are left holding the analytic values.
GradCheckReport check_gradients(const LossFn& loss_fn, ParamStore& store, double epsilon = 1e-5,
                                double tolerance = 1e-4);

}  // namespace schedgraph
