#include "spikekit/neurons.hpp"

namespace spikekit {

namespace {

void check_unit_interval(double x, const char* name, bool open_low,
                         bool open_high) {
  const bool low_ok = open_low ? x > 0.0 : x >= 0.0;
  const bool high_ok = open_high ? x < 1.0 : x <= 1.0;
  if (!low_ok || !high_ok)
    throw std::invalid_argument(std::string(name) + " = " + std::to_string(x) +
                                " outside its valid range");
}

}  // namespace

void LifParams::validate() const {
  check_unit_interval(alpha, "alpha", true, true);
  if (v_th <= 0.0) throw std::invalid_argument("v_th must be positive");
  if (w_in.shape() != std::vector<int>{n_in, n_rec})
    throw std::invalid_argument("w_in shape " + w_in.shape_str() +
                                " does not match [n_in x n_rec]");
  if (w_rec.shape() != std::vector<int>{n_rec, n_rec})
    throw std::invalid_argument("w_rec shape " + w_rec.shape_str() +
                                " does not match [n_rec x n_rec]");
}

void AlifParams::validate() const {
  LifParams::validate();
  check_unit_interval(rho, "rho", true, true);
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
}

void ReadoutParams::validate() const {
  check_unit_interval(kappa, "kappa", false, true);
  if (w_out.rank() != 2 || b_out.rank() != 1 ||
      w_out.dim(1) != b_out.dim(0))
    throw std::invalid_argument("readout shapes " + w_out.shape_str() + ", " +
                                b_out.shape_str() + " are inconsistent");
}

CellState zero_state(int batch, int n_rec) {
  return {Tensor::zeros({batch, n_rec}), Tensor::zeros({batch, n_rec}),
          Tensor::zeros({batch, n_rec})};
}

void zero_diagonal(Tensor& w) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1))
    throw std::invalid_argument("zero_diagonal expects a square matrix, got " +
                                w.shape_str());
  for (int i = 0; i < w.dim(0); ++i) w(i, i) = 0.0;
}

CellState lif_step(const LifParams& p, const CellState& s, const Tensor& x_t) {
  return lif_step_t<Tensor>(p, s, x_t, p.w_in, p.w_rec);
}

CellState alif_step(const AlifParams& p, const CellState& s,
                    const Tensor& x_t) {
  return alif_step_t<Tensor>(p, s, x_t, p.w_in, p.w_rec);
}

Tensor readout_step(const ReadoutParams& p, const Tensor& y_prev,
                    const Tensor& z_t) {
  return readout_step_t<Tensor>(p, y_prev, z_t, p.w_out, p.b_out);
}

Tensor state_pseudo(const LifParams& p, const CellState& s) {
  return pseudo_multiplier(add_scalar(s.v, -p.v_th), p.pd, p.v_th);
}

Tensor state_pseudo(const AlifParams& p, const CellState& s) {
  Tensor thresh = add_scalar(mul_scalar(s.a, p.beta), p.v_th);
  return pseudo_multiplier(sub(s.v, thresh), p.pd, p.v_th);
}

double firing_rate_hz(const Tensor& spikes, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (spikes.size() == 0) return 0.0;
  return mean(spikes).item() / dt;
}

Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& x) {
  Tensor h = x;
  for (const auto& layer : layers)
    h = apply_activation(add_rowvec(matmul(h, layer.w), layer.b), layer.act);
  return h;
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name +
                              "' (valid: linear, relu, sigmoid, tanh)");
}

}  // namespace spikekit
