#pragma once

#include <functional>
#include <map>
#include <string>

#include "idhnet/optim.hpp"

namespace idhnet {

/// Loss callback for gradient checking: returns the loss at the current
/// parameter values and writes the analytic gradient into params.
using LossWithGrad = std::function<double(ParamSet& params)>;

struct GradCheckReport {
  /// Maximum relative error per parameter name.
  std::map<std::string, double> max_relative_error;
  double worst = 0.0;
  std::string worst_parameter;
};

/// Compares analytic gradients against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps), entry by entry. The relative error is
/// |a - n| / max(1e-8, |a| + |n|). Parameter values are restored on return.
GradCheckReport grad_check(const LossWithGrad& loss_fn, ParamSet& params, double eps = 1e-5);

}  // namespace idhnet
