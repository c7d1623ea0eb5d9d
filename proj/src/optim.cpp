#include "idhnet/optim.hpp"

#include <cmath>

#include "idhnet/errors.hpp"

namespace idhnet {

void ParamSet::add(const std::string& name, Tensor value) {
  Tensor zero(value.shape(), 0.0);
  values_.insert_or_assign(name, std::move(value));
  grads_.insert_or_assign(name, std::move(zero));
}

Tensor& ParamSet::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw LookupError("missing gradient for parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw LookupError("missing gradient for parameter '" + name + "'");
  return it->second;
}

void ParamSet::set_grad(const std::string& name, Tensor grad) {
  if (!value(name).same_shape(grad)) {
    throw DimensionError("gradient for '" + name + "' has shape " + grad.shape_string() +
                         ", parameter has " + value(name).shape_string());
  }
  grads_.insert_or_assign(name, std::move(grad));
}

void ParamSet::accumulate_grad(const std::string& name, const Tensor& grad, double scale) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    set_grad(name, Tensor(value(name).shape(), 0.0));
    it = grads_.find(name);
  }
  axpy(scale, grad, it->second);
}

void ParamSet::zero_grad() {
  for (auto& [name, value] : values_) grads_.insert_or_assign(name, Tensor(value.shape(), 0.0));
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, value] : values_) n += value.size();
  return n;
}

void adam_step(ParamSet& params, AdamState& state) {
  for (const auto& [name, value] : params.values()) {
    if (params.grads().count(name) == 0) {
      throw LookupError("adam_step: missing gradient for parameter '" + name + "'");
    }
  }
  const AdamConfig& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& [name, unused] : params.values()) {
    Tensor& p = params.value(name);
    const Tensor& g = params.grad(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, p.shape(), 0.0);
    auto [v_it, v_new] = state.second_moment.try_emplace(name, p.shape(), 0.0);
    auto ps = p.data();
    auto gs = g.data();
    auto ms = m_it->second.data();
    auto vs = v_it->second.data();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i] -= cfg.learning_rate * cfg.weight_decay * ps[i];
      ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * gs[i];
      vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * gs[i] * gs[i];
      const double m_hat = ms[i] / correction1;
      const double v_hat = vs[i] / correction2;
      const double denom = std::sqrt(v_hat) + cfg.epsilon;
      // eps = 0 with a zero gradient leaves the entry in place
      if (denom > 0.0) ps[i] -= cfg.learning_rate * m_hat / denom;
    }
  }
}

}  // namespace idhnet
