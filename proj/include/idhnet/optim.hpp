#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "idhnet/tensor.hpp"

namespace idhnet {

/// Named trainable tensors with gradient buffers of matching shape.
class ParamSet {
 public:
  /// Registers a parameter and a zero gradient of the same shape.
  void add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return values_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  /// Replaces a gradient; the shape must equal the parameter shape.
  void set_grad(const std::string& name, Tensor grad);
  /// Adds into a gradient; the shape must equal the parameter shape.
  void accumulate_grad(const std::string& name, const Tensor& grad, double scale = 1.0);
  void zero_grad();
  /// Drops a gradient buffer (used to exercise the missing-gradient path).
  void erase_grad(const std::string& name) { grads_.erase(name); }

  const std::map<std::string, Tensor>& values() const { return values_; }
  const std::map<std::string, Tensor>& grads() const { return grads_; }

  std::size_t parameter_count() const;

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One Adam update with bias correction. Weight decay is decoupled:
/// param <- param - lr * wd * param is applied before the Adam delta.
void adam_step(ParamSet& params, AdamState& state);

}  // namespace idhnet
