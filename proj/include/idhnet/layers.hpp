#pragma once

#include "idhnet/rng.hpp"
#include "idhnet/tensor.hpp"

namespace idhnet {

/// out[i,k] = sum_j x[i,j] * W[j,k] + b[k]
Tensor affine_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct AffineGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

/// Backward rule for affine_forward given dL/dout.
AffineGrads affine_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out);

double sigmoid(double z);
Tensor sigmoid(const Tensor& z);
/// dL/dz from dL/dy where y = sigmoid(z), using the saved output y.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

Tensor relu(const Tensor& z);
/// dL/dz from dL/dy where y = relu(z), using the saved output y.
Tensor relu_backward(const Tensor& y, const Tensor& grad_out);

/// Inverted-dropout keep mask: entries are 0 or 1/(1-p).
Tensor dropout_mask(const std::vector<std::size_t>& shape, double drop_probability, Rng& rng);

/// Glorot/Xavier uniform initialization for a fan_in x fan_out matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Elementwise product, shapes must match.
Tensor hadamard(const Tensor& a, const Tensor& b);

}  // namespace idhnet
