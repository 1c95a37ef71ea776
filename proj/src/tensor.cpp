#include "spikekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spikekit {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor extent");
    n *= d;
  }
  return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::from_row(std::initializer_list<double> v) {
  return Tensor({static_cast<int>(v.size())}, std::vector<double>(v));
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng,
                     double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.data_) x = dist(rng);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank())
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str());
  return shape_[static_cast<size_t>(axis)];
}

double& Tensor::operator()(int i, int j) {
  return data_[static_cast<size_t>(i) * shape_[1] + j];
}
double Tensor::operator()(int i, int j) const {
  return data_[static_cast<size_t>(i) * shape_[1] + j];
}
double& Tensor::operator()(int i, int j, int k) {
  return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
}
double Tensor::operator()(int i, int j, int k) const {
  return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("item() on tensor of shape " + shape_str());
  return data_[0];
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  ensure_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  ensure_finite(out, "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  ensure_finite(out, "mul");
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.values()) v += c;
  ensure_finite(out, "add_scalar");
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.values()) v *= c;
  ensure_finite(out, "mul_scalar");
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<size_t>(i) * k;
    double* orow = po + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  ensure_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose expects 2-D, got " + a.shape_str());
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
  if (mat.rank() != 2 || vec.rank() != 1 || mat.dim(1) != vec.dim(0))
    shape_error("add_rowvec", mat, vec);
  Tensor out = mat;
  const int m = mat.dim(0), n = mat.dim(1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(i, j) += vec(j);
  ensure_finite(out, "add_rowvec");
  return out;
}

Tensor expand_rows(const Tensor& vec, int rows) {
  if (vec.rank() != 1)
    throw std::invalid_argument("expand_rows expects 1-D, got " +
                                vec.shape_str());
  Tensor out({rows, vec.dim(0)});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < vec.dim(0); ++j) out(i, j) = vec(j);
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() == 1 && b.rank() == 1 && axis == 0) {
    std::vector<double> v(a.values());
    v.insert(v.end(), b.values().begin(), b.values().end());
    return Tensor({a.dim(0) + b.dim(0)}, std::move(v));
  }
  if (a.rank() != 2 || b.rank() != 2 || axis < 0 || axis > 1)
    shape_error("concat", a, b);
  if (axis == 0) {
    if (a.dim(1) != b.dim(1)) shape_error("concat", a, b);
    std::vector<double> v(a.values());
    v.insert(v.end(), b.values().begin(), b.values().end());
    return Tensor({a.dim(0) + b.dim(0), a.dim(1)}, std::move(v));
  }
  if (a.dim(0) != b.dim(0)) shape_error("concat", a, b);
  Tensor out({a.dim(0), a.dim(1) + b.dim(1)});
  for (int i = 0; i < a.dim(0); ++i) {
    for (int j = 0; j < a.dim(1); ++j) out(i, j) = a(i, j);
    for (int j = 0; j < b.dim(1); ++j) out(i, a.dim(1) + j) = b(i, j);
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int stop) {
  if (axis < 0 || axis >= a.rank() || a.rank() > 2 || start < 0 ||
      stop > a.dim(axis) || start > stop)
    throw std::invalid_argument("slice: invalid range [" +
                                std::to_string(start) + "," +
                                std::to_string(stop) + ") along axis " +
                                std::to_string(axis) + " of " + a.shape_str());
  const int len = stop - start;
  if (a.rank() == 1) {
    std::vector<double> v(a.values().begin() + start,
                          a.values().begin() + stop);
    return Tensor({len}, std::move(v));
  }
  if (axis == 0) {
    std::vector<double> v(a.values().begin() + static_cast<size_t>(start) * a.dim(1),
                          a.values().begin() + static_cast<size_t>(stop) * a.dim(1));
    return Tensor({len, a.dim(1)}, std::move(v));
  }
  Tensor out({a.dim(0), len});
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = 0; j < len; ++j) out(i, j) = a(i, start + j);
  return out;
}

Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "sum");
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return Tensor::scalar(sum(a).item() / static_cast<double>(a.size()));
}

Tensor sum_axis0(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("sum_axis0 expects 2-D, got " + a.shape_str());
  Tensor out({a.dim(1)});
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = 0; j < a.dim(1); ++j) out(j) += a(i, j);
  ensure_finite(out, "sum_axis0");
  return out;
}

Tensor mean_axis0(const Tensor& a) {
  if (a.dim(0) == 0) throw std::invalid_argument("mean_axis0 of empty tensor");
  return mul_scalar(sum_axis0(a), 1.0 / a.dim(0));
}

Tensor exp(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = std::exp(v);
  ensure_finite(out, "exp");
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = std::log(v);
  ensure_finite(out, "log");
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = std::tanh(v);
  return out;
}

Tensor softmax(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("softmax expects 2-D, got " + a.shape_str());
  Tensor out = a;
  const int m = a.dim(0), n = a.dim(1);
  for (int i = 0; i < m; ++i) {
    double mx = out(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, out(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      z += out(i, j);
    }
    for (int j = 0; j < n; ++j) out(i, j) /= z;
  }
  ensure_finite(out, "softmax");
  return out;
}

double dot_flat(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot_flat");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot_flat(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace spikekit
