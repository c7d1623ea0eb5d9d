#include "idhnet/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "idhnet/errors.hpp"

namespace idhnet {
namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(name) + ": expected a matrix, got shape " + t.shape_string());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string() + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_.front();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: lhs axis 1 (" + std::to_string(a.cols()) + ") != rhs axis 0 (" +
                         std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = out.data().data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* b_row = b.data().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += aip * b_row[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn lhs");
  require_matrix(b, "matmul_tn rhs");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: lhs axis 0 (" + std::to_string(a.rows()) +
                         ") != rhs axis 0 (" + std::to_string(b.rows()) + ")");
  }
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  Tensor out({n, m});
  for (std::size_t p = 0; p < k; ++p) {
    const double* b_row = b.data().data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      double* out_row = out.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += api * b_row[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt lhs");
  require_matrix(b, "matmul_nt rhs");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: lhs axis 1 (" + std::to_string(a.cols()) +
                         ") != rhs axis 1 (" + std::to_string(b.cols()) + ")");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = a.data().data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* b_row = b.data().data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      out(i, j) = acc;
    }
  }
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (!x.same_shape(y)) {
    throw DimensionError("axpy: shape " + x.shape_string() + " vs " + y.shape_string());
  }
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += alpha * xs[i];
}

double squared_norm(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v * v;
  return acc;
}

Tensor column_sums(const Tensor& m) {
  require_matrix(m, "column_sums");
  Tensor out({m.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j);
  }
  return out;
}

}  // namespace idhnet
