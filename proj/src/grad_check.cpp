#include "idhnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "idhnet/errors.hpp"

namespace idhnet {
namespace {

double checked(double loss) {
  if (!std::isfinite(loss)) throw DataError("grad_check: loss is not finite");
  return loss;
}

}  // namespace

GradCheckReport grad_check(const LossWithGrad& loss_fn, ParamSet& params, double eps) {
  if (!(eps > 0.0)) throw DataError("grad_check: eps must be positive");
  params.zero_grad();
  checked(loss_fn(params));
  std::map<std::string, Tensor> analytic = params.grads();

  GradCheckReport report;
  for (const auto& [name, grad] : analytic) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      double& entry = params.value(name)[i];
      const double saved = entry;
      entry = saved + eps;
      const double plus = checked(loss_fn(params));
      entry = saved - eps;
      const double minus = checked(loss_fn(params));
      entry = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = grad[i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
    report.max_relative_error[name] = worst;
    if (worst >= report.worst) {
      report.worst = worst;
      report.worst_parameter = name;
    }
  }
  params.zero_grad();
  return report;
}

}  // namespace idhnet
