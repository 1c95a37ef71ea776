#include "spikekit/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

namespace {

void check_labels(const std::vector<int>& labels, int classes) {
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw std::invalid_argument("label " + std::to_string(y) +
                                  " out of range [0," +
                                  std::to_string(classes) + ")");
}

template <typename T>
T mse_step(const T& y, const Tensor& target) {
  T d = sub(y, T(target));
  return mean(mul(d, d));
}

}  // namespace

Tensor one_hot(const std::vector<int>& labels, int classes) {
  check_labels(labels, classes);
  Tensor out({static_cast<int>(labels.size()), classes});
  for (size_t i = 0; i < labels.size(); ++i)
    out(static_cast<int>(i), labels[i]) = 1.0;
  return out;
}

double loss_value(const LossConfig& cfg, const std::vector<Tensor>& outputs_t,
                  const std::vector<int>& labels) {
  if (outputs_t.empty()) throw std::invalid_argument("no outputs to score");
  const int classes = outputs_t.front().dim(1);
  if (cfg.readout == ReadoutMode::final_step) {
    const Tensor& y = outputs_t.back();
    if (cfg.kind == LossKind::categorical_crossentropy)
      return softmax_cross_entropy(y, labels);
    return mse_step<Tensor>(y, one_hot(labels, classes)).item();
  }
  double total = 0.0;
  for (const Tensor& y : outputs_t) {
    if (cfg.kind == LossKind::categorical_crossentropy)
      total += softmax_cross_entropy(y, labels);
    else
      total += mse_step<Tensor>(y, one_hot(labels, classes)).item();
  }
  return total / static_cast<double>(outputs_t.size());
}

Var loss_on_tape(const LossConfig& cfg, const std::vector<Var>& outputs_t,
                 const std::vector<int>& labels) {
  if (outputs_t.empty()) throw std::invalid_argument("no outputs to score");
  const int classes = outputs_t.front().value().dim(1);
  const Tensor targets = one_hot(labels, classes);
  auto step_loss = [&](const Var& y) {
    if (cfg.kind == LossKind::categorical_crossentropy)
      return softmax_cross_entropy(y, labels);
    return mse_step<Var>(y, targets);
  };
  if (cfg.readout == ReadoutMode::final_step) return step_loss(outputs_t.back());
  Var total = step_loss(outputs_t.front());
  for (size_t t = 1; t < outputs_t.size(); ++t)
    total = add(total, step_loss(outputs_t[t]));
  return mul_scalar(total, 1.0 / static_cast<double>(outputs_t.size()));
}

Tensor loss_output_grad_step(const LossConfig& cfg, const Tensor& y_t,
                             const std::vector<int>& labels, int t,
                             int steps) {
  const int batch = y_t.dim(0), classes = y_t.dim(1);
  const bool active =
      cfg.readout == ReadoutMode::mean_over_time || t + 1 == steps;
  if (!active) return Tensor::zeros({batch, classes});
  const Tensor targets = one_hot(labels, classes);
  const double step_scale =
      cfg.readout == ReadoutMode::mean_over_time ? 1.0 / steps : 1.0;
  if (cfg.kind == LossKind::categorical_crossentropy)
    return mul_scalar(sub(softmax(y_t), targets), step_scale / batch);
  return mul_scalar(sub(y_t, targets),
                    2.0 * step_scale / (static_cast<double>(batch) * classes));
}

std::vector<Tensor> loss_output_grads(const LossConfig& cfg,
                                      const std::vector<Tensor>& outputs_t,
                                      const std::vector<int>& labels) {
  if (outputs_t.empty()) throw std::invalid_argument("no outputs to score");
  const int steps = static_cast<int>(outputs_t.size());
  std::vector<Tensor> grads;
  grads.reserve(outputs_t.size());
  for (int t = 0; t < steps; ++t)
    grads.push_back(loss_output_grad_step(cfg, outputs_t[static_cast<size_t>(t)],
                                          labels, t, steps));
  return grads;
}

Tensor predict_probs(const LossConfig& cfg,
                     const std::vector<Tensor>& outputs_t) {
  if (outputs_t.empty()) throw std::invalid_argument("no outputs to score");
  if (cfg.readout == ReadoutMode::final_step) return softmax(outputs_t.back());
  Tensor acc = softmax(outputs_t.front());
  for (size_t t = 1; t < outputs_t.size(); ++t)
    acc = add(acc, softmax(outputs_t[t]));
  return mul_scalar(acc, 1.0 / static_cast<double>(outputs_t.size()));
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(static_cast<size_t>(probs.dim(0)));
  for (int i = 0; i < probs.dim(0); ++i) {
    int best = 0;
    for (int j = 1; j < probs.dim(1); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double firing_rate_regularizer(const Tensor& spikes, double target_hz,
                               double dt, double coef) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (spikes.rank() != 3)
    throw std::invalid_argument("regularizer expects [batch x T x n] spikes, got " +
                                spikes.shape_str());
  const int b = spikes.dim(0), steps = spikes.dim(1), n = spikes.dim(2);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < b; ++i)
      for (int t = 0; t < steps; ++t) s += spikes(i, t, j);
    const double rate = s / (static_cast<double>(b) * steps * dt);
    const double dev = rate - target_hz;
    total += dev * dev;
  }
  return coef * total;
}

Var firing_rate_regularizer(const std::vector<Var>& spikes_t, double target_hz,
                            double dt, double coef) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (spikes_t.empty()) throw std::invalid_argument("no spikes to regularize");
  Var acc = spikes_t.front();
  for (size_t t = 1; t < spikes_t.size(); ++t) acc = add(acc, spikes_t[t]);
  const double steps = static_cast<double>(spikes_t.size());
  Var rate = mul_scalar(mean_axis0(acc), 1.0 / (steps * dt));
  Var dev = add_scalar(rate, -target_hz);
  return mul_scalar(sum(mul(dev, dev)), coef);
}

Tensor rate_reg_spike_grad(const Tensor& spikes, double target_hz, double dt,
                           double coef) {
  const int b = spikes.dim(0), steps = spikes.dim(1), n = spikes.dim(2);
  Tensor g({n});
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < b; ++i)
      for (int t = 0; t < steps; ++t) s += spikes(i, t, j);
    const double rate = s / (static_cast<double>(b) * steps * dt);
    g(j) = coef * 2.0 * (rate - target_hz) /
           (static_cast<double>(b) * steps * dt);
  }
  return g;
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "categorical_crossentropy") return LossKind::categorical_crossentropy;
  if (s == "mse") return LossKind::mse;
  throw std::invalid_argument("unknown loss '" + s +
                              "' (valid: categorical_crossentropy, mse)");
}

ReadoutMode readout_mode_from_string(const std::string& s) {
  if (s == "mean") return ReadoutMode::mean_over_time;
  if (s == "final") return ReadoutMode::final_step;
  throw std::invalid_argument("unknown readout mode '" + s +
                              "' (valid: mean, final)");
}

}  // namespace spikekit
