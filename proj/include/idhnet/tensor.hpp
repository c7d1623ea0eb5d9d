#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace idhnet {

/// Dense row-major array of doubles.
///
/// Rank-1 tensors hold vectors (biases), rank-2 tensors hold matrices with
/// rows indexing samples or nodes. Higher ranks are storage only. A zero
/// extent is allowed: a graph whose edges were all dropped still carries an
/// E×Z edge-feature matrix with E = 0.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  /// Matrix literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent; 1 for rank-1 tensors viewed as a row.
  std::size_t rows() const;
  /// Trailing extent.
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(double value);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// a(n×k) · b(k×m)
Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ(k×n)ᵀ · b(k×m), i.e. a is k×n
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a(n×k) · bᵀ where b is m×k
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// y += alpha * x, shapes must match.
void axpy(double alpha, const Tensor& x, Tensor& y);

/// Sum of squares of all entries.
double squared_norm(const Tensor& t);

/// Column sums of a matrix as a rank-1 tensor.
Tensor column_sums(const Tensor& m);

}  // namespace idhnet
