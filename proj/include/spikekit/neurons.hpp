#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spikekit/tape.hpp"

namespace spikekit {

/// Leaky integrate-and-fire cell. Soft reset (subtract threshold), spike
/// on v >= threshold, recurrent input from previous-step spikes.
struct LifParams {
  int n_in = 0;
  int n_rec = 0;
  double alpha = std::exp(-1.0 / 20.0);  // membrane decay per step
  double v_th = 1.0;
  Tensor w_in;   // [n_in x n_rec]
  Tensor w_rec;  // [n_rec x n_rec], zero diagonal
  PseudoDerivative pd;

  void validate() const;
};

/// LIF plus an adaptive threshold: A = v_th + beta * a, a' = rho * a + z.
struct AlifParams : LifParams {
  double rho = std::exp(-1.0 / 200.0);  // adaptation decay per step
  double beta = 0.07;                   // adaptation coupling

  void validate() const;
};

/// Leaky readout y' = kappa * y + z * w_out + b_out.
struct ReadoutParams {
  double kappa = std::exp(-1.0 / 20.0);
  Tensor w_out;  // [n_rec x n_out]
  Tensor b_out;  // [n_out]

  void validate() const;
};

/// Per-timestep neuron state; `a` stays a zero tensor for LIF.
template <typename T>
struct CellStateT {
  T v, a, z;
};
using CellState = CellStateT<Tensor>;

CellState zero_state(int batch, int n_rec);

/// Forces the self-loop diagonal of a square weight matrix to zero.
void zero_diagonal(Tensor& w);

// Single-source cell dynamics, instantiated for Tensor (plain forward) and
// Var (recorded forward). The reset term is detached: gradients do not flow
// through the spike that caused the reset.

template <typename T>
CellStateT<T> lif_step_t(const LifParams& p, const CellStateT<T>& s,
                         const T& x_t, const T& w_in, const T& w_rec) {
  T input = add(matmul(x_t, w_in), matmul(s.z, w_rec));
  T reset = detach(mul_scalar(s.z, p.v_th));
  T v = sub(add(mul_scalar(s.v, p.alpha), input), reset);
  T z = heaviside_with_pseudo(add_scalar(v, -p.v_th), p.pd, p.v_th);
  return {v, s.a, z};
}

template <typename T>
CellStateT<T> alif_step_t(const AlifParams& p, const CellStateT<T>& s,
                          const T& x_t, const T& w_in, const T& w_rec) {
  T a_new = add(mul_scalar(s.a, p.rho), s.z);
  T thresh_old = add_scalar(mul_scalar(s.a, p.beta), p.v_th);
  T reset = detach(mul(s.z, thresh_old));
  T input = add(matmul(x_t, w_in), matmul(s.z, w_rec));
  T v = sub(add(mul_scalar(s.v, p.alpha), input), reset);
  T thresh_new = add_scalar(mul_scalar(a_new, p.beta), p.v_th);
  T z = heaviside_with_pseudo(sub(v, thresh_new), p.pd, p.v_th);
  return {v, a_new, z};
}

template <typename T>
T readout_step_t(const ReadoutParams& p, const T& y_prev, const T& z_t,
                 const T& w_out, const T& b_out) {
  return add_rowvec(add(mul_scalar(y_prev, p.kappa), matmul(z_t, w_out)),
                    b_out);
}

CellState lif_step(const LifParams& p, const CellState& s, const Tensor& x_t);
CellState alif_step(const AlifParams& p, const CellState& s, const Tensor& x_t);
Tensor readout_step(const ReadoutParams& p, const Tensor& y_prev,
                    const Tensor& z_t);

/// Pseudo-derivative of the spike function at the current state, psi_j(t).
Tensor state_pseudo(const LifParams& p, const CellState& s);
Tensor state_pseudo(const AlifParams& p, const CellState& s);

/// Mean spikes per neuron per second across all entries of a spike tensor.
double firing_rate_hz(const Tensor& spikes, double dt);

/// One hidden layer of a multi-layer perceptron.
enum class Activation { linear, relu, sigmoid, tanh };

struct MlpLayer {
  Tensor w;  // [fan_in x fan_out]
  Tensor b;  // [fan_out]
  Activation act = Activation::linear;
};

template <typename T>
T apply_activation(const T& x, Activation act) {
  switch (act) {
    case Activation::linear: return x;
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  throw std::logic_error("unknown activation");
}

/// Standard affine + activation composition over a layer stack.
Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& x);

Activation activation_from_string(const std::string& name);

}  // namespace spikekit
