#include "idhnet/layers.hpp"

#include <cmath>

#include "idhnet/errors.hpp"

namespace idhnet {

Tensor affine_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("affine_forward: expected x[n×d_in], W[d_in×d_out], b[d_out], got " +
                         x.shape_string() + ", " + weight.shape_string() + ", " +
                         bias.shape_string());
  }
  if (x.cols() != weight.rows()) {
    throw DimensionError("affine_forward: x axis 1 (" + std::to_string(x.cols()) +
                         ") != W axis 0 (" + std::to_string(weight.rows()) + ")");
  }
  if (weight.cols() != bias.size()) {
    throw DimensionError("affine_forward: W axis 1 (" + std::to_string(weight.cols()) +
                         ") != b axis 0 (" + std::to_string(bias.size()) + ")");
  }
  Tensor out = matmul(x, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += bias[k];
  }
  return out;
}

AffineGrads affine_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out) {
  return {matmul_nt(grad_out, weight), matmul_tn(x, grad_out), column_sums(grad_out)};
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& z) {
  Tensor out = z;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor out = grad_out;
  auto ys = y.data();
  auto gs = out.data();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= ys[i] * (1.0 - ys[i]);
  return out;
}

Tensor relu(const Tensor& z) {
  Tensor out = z;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor out = grad_out;
  auto ys = y.data();
  auto gs = out.data();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (ys[i] <= 0.0) gs[i] = 0.0;
  }
  return out;
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double drop_probability, Rng& rng) {
  if (drop_probability < 0.0 || drop_probability >= 1.0) {
    throw DataError("dropout probability must lie in [0, 1)");
  }
  Tensor mask(shape, 1.0);
  if (drop_probability == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - drop_probability);
  for (double& v : mask.data()) v = rng.bernoulli(drop_probability) ? 0.0 : keep_scale;
  return mask;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("hadamard: shape " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out = a;
  auto bs = b.data();
  auto os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] *= bs[i];
  return out;
}

}  // namespace idhnet
