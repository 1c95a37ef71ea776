#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace spikekit {

/// Dense row-major tensor of doubles. The only value type that flows
/// through networks; immutable by convention once handed to an operation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from_row(std::initializer_list<double> v);
  /// Gaussian init, used for weights with std = 1/sqrt(fan_in).
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng,
                      double stddev = 1.0);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  int dim(int axis) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator()(int i) { return data_[static_cast<size_t>(i)]; }
  double operator()(int i) const { return data_[static_cast<size_t>(i)]; }
  double& operator()(int i, int j);
  double operator()(int i, int j) const;
  double& operator()(int i, int j, int k);
  double operator()(int i, int j, int k) const;

  /// Value of a single-element tensor; throws otherwise.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int>& shape);

/// Throws std::runtime_error naming `op` if t contains NaN or Inf.
void ensure_finite(const Tensor& t, const char* op);

/// Throws std::invalid_argument naming both shapes if they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

// Elementwise arithmetic; shapes must match exactly (no broadcasting
// beyond the scalar overloads below).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

/// 2-D matrix product [m x k] @ [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Adds a length-n row vector to every row of an [m x n] matrix.
Tensor add_rowvec(const Tensor& mat, const Tensor& vec);
/// Replicates a length-n vector into an [m x n] matrix.
Tensor expand_rows(const Tensor& vec, int rows);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
/// Half-open [start, stop) slice along `axis` of a 1-D or 2-D tensor.
Tensor slice(const Tensor& a, int axis, int start, int stop);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor sum_axis0(const Tensor& a);
Tensor mean_axis0(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Row-wise softmax of a 2-D tensor (max-shifted).
Tensor softmax(const Tensor& a);

double dot_flat(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double max_abs(const Tensor& a);

}  // namespace spikekit
