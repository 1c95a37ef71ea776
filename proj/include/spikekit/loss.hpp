#pragma once

#include <string>
#include <vector>

#include "spikekit/models.hpp"

namespace spikekit {

enum class LossKind { categorical_crossentropy, mse };

/// Whether the classification loss reads outputs at every timestep (mean)
/// or only at the final step.
enum class ReadoutMode { mean_over_time, final_step };

struct LossConfig {
  LossKind kind = LossKind::categorical_crossentropy;
  ReadoutMode readout = ReadoutMode::mean_over_time;
};

struct RateRegConfig {
  double coef = 0.0;  // 0 disables the term
  double target_hz = 10.0;
  double dt = 1e-3;
};

Tensor one_hot(const std::vector<int>& labels, int classes);

/// Task loss over per-step outputs; identical arithmetic to the taped path.
double loss_value(const LossConfig& cfg, const std::vector<Tensor>& outputs_t,
                  const std::vector<int>& labels);

Var loss_on_tape(const LossConfig& cfg, const std::vector<Var>& outputs_t,
                 const std::vector<int>& labels);

/// Analytic dLoss/dy[t] for one step, the learning-signal source for
/// e-prop; computable online from the step's output alone.
Tensor loss_output_grad_step(const LossConfig& cfg, const Tensor& y_t,
                             const std::vector<int>& labels, int t, int steps);

/// Analytic dLoss/dy[t] for every step.
std::vector<Tensor> loss_output_grads(const LossConfig& cfg,
                                      const std::vector<Tensor>& outputs_t,
                                      const std::vector<int>& labels);

/// Class probabilities for prediction: mean over steps of per-step softmax
/// (mean mode) or softmax of the final step.
Tensor predict_probs(const LossConfig& cfg,
                     const std::vector<Tensor>& outputs_t);

std::vector<int> argmax_rows(const Tensor& probs);

/// coef * sum_j (rate_j - target_hz)^2 with rate_j in Hz averaged over
/// batch and time.
double firing_rate_regularizer(const Tensor& spikes, double target_hz,
                               double dt, double coef);

/// Tape-differentiable version over per-step spike Vars; gradients flow
/// through the registered pseudo-derivative.
Var firing_rate_regularizer(const std::vector<Var>& spikes_t, double target_hz,
                            double dt, double coef);

/// Analytic d(reg)/d z[b,t,j]: constant over b and t, returned per neuron.
Tensor rate_reg_spike_grad(const Tensor& spikes, double target_hz, double dt,
                           double coef);

LossKind loss_kind_from_string(const std::string& s);
ReadoutMode readout_mode_from_string(const std::string& s);

}  // namespace spikekit
