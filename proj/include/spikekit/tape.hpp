#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spikekit/tensor.hpp"

namespace spikekit {

/// Named map from parameter identifiers to tensors. Doubles as the common
/// currency of all learning rules (gradients) and as a parameter snapshot.
using GradientSet = std::map<std::string, Tensor>;
using ParamMap = GradientSet;

/// Surrogate for the derivative of the spike step function, used only on
/// the backward pass. Triangular: psi = gamma * max(0, 1 - |x| / v_th).
struct PseudoDerivative {
  enum class Kind { triangular };
  double gamma = 0.3;
  Kind kind = Kind::triangular;
};

/// Backward multiplier psi of the spike nonlinearity at v_minus_thresh.
Tensor pseudo_multiplier(const Tensor& v_minus_thresh,
                         const PseudoDerivative& pd, double v_th);

/// Exact step H(x >= 0), elementwise {0,1}.
Tensor heaviside(const Tensor& x);

class Tape;

/// Handle to a tensor value, optionally recorded on a Tape. Constants
/// (no tape) and recorded values mix freely in arithmetic.
class Var {
 public:
  Var() = default;
  Var(Tensor value) : value_(std::move(value)) {}  // NOLINT: constants convert

  const Tensor& value() const { return value_; }
  bool recorded() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  Var(Tensor value, Tape* tape, int node)
      : value_(std::move(value)), tape_(tape), node_(node) {}

  Tensor value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Ordered record of primitive operations with enough information to
/// replay adjoints. Explicit and scoped: create one, record a forward
/// pass, call backward() once. Confined to a single thread.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a tracked leaf parameter. backward() reports an adjoint for
  /// every parameter registered here, all-zeros if the loss never saw it.
  Var param(const std::string& id, const Tensor& value);

  bool consumed() const { return consumed_; }
  size_t node_count() const { return nodes_.size(); }

  /// Records an operation result. Used by the Var op overloads.
  Var emit(Tensor value, BackwardFn back);
  /// Adds g into the adjoint accumulator of `node` (backward phase only).
  void accumulate(int node, const Tensor& g);

  friend GradientSet backward(Tape& tape, const Var& loss);

 private:
  struct Node {
    BackwardFn back;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  std::vector<std::pair<std::string, int>> params_;
  std::vector<std::vector<int>> param_shapes_;
  bool consumed_ = false;
};

/// Replays the tape in exact reverse execution order and returns the
/// adjoint of every tracked parameter. The tape is consumed.
GradientSet backward(Tape& tape, const Var& loss);

// Recorded counterparts of the Tensor operations. Each computes the same
// forward value and, when an input is recorded, registers the adjoint rule.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var add_rowvec(const Var& mat, const Var& vec);
Var expand_rows(const Var& vec, int rows);
Var concat(const Var& a, const Var& b, int axis);
Var slice(const Var& a, int axis, int start, int stop);
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_axis0(const Var& a);
Var mean_axis0(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);
Var softmax(const Var& a);

/// Identity forward, zero backward.
Var detach(const Var& a);
inline Tensor detach(const Tensor& a) { return a; }

/// Spike nonlinearity: forward is the exact step H(x >= 0); the recorded
/// backward multiplier is the pseudo-derivative psi evaluated at x.
Var heaviside_with_pseudo(const Var& v_minus_thresh, const PseudoDerivative& pd,
                          double v_th);
Tensor heaviside_with_pseudo(const Tensor& v_minus_thresh,
                             const PseudoDerivative& pd, double v_th);

/// Mean softmax cross-entropy over rows of [batch x classes] logits with
/// integer labels; backward is the exact (probs - one_hot) / batch rule.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);
double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels);

/// Central differences (f(p+eps) - f(p-eps)) / (2 eps) per coordinate.
GradientSet finite_difference_gradient(
    const std::function<double(const ParamMap&)>& f, const ParamMap& params,
    double eps);

}  // namespace spikekit
