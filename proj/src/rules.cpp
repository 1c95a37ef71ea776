#include "spikekit/rules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spikekit {

TraceState TraceState::zeros(int n_pre, int n_post) {
  return {Tensor::zeros({n_pre, n_post}), Tensor::zeros({n_pre, n_post}),
          Tensor::zeros({n_pre, n_post})};
}

TraceState eprop_trace_step(double alpha, double rho, double beta,
                            double kappa, const Tensor& pre, const Tensor& psi,
                            const TraceState& trace, Tensor* eligibility) {
  if (pre.rank() != 1 || psi.rank() != 1)
    throw std::invalid_argument("eprop_trace_step expects 1-D pre " +
                                pre.shape_str() + " and psi " +
                                psi.shape_str());
  const int n_pre = pre.dim(0), n_post = psi.dim(0);
  const std::vector<int> expect{n_pre, n_post};
  if (trace.eps_v.shape() != expect || trace.eps_a.shape() != expect ||
      trace.filtered.shape() != expect)
    throw std::invalid_argument("trace shape " + trace.eps_v.shape_str() +
                                " does not match pre x post " +
                                shape_to_string(expect));

  TraceState out = trace;
  if (eligibility && eligibility->shape() != expect)
    *eligibility = Tensor::zeros(expect);
  const double* ppre = pre.data();
  const double* ppsi = psi.data();
  const bool adaptive = beta != 0.0;
  for (int i = 0; i < n_pre; ++i) {
    const double pre_i = ppre[i];
    double* ev = out.eps_v.data() + static_cast<size_t>(i) * n_post;
    double* ea = out.eps_a.data() + static_cast<size_t>(i) * n_post;
    double* ft = out.filtered.data() + static_cast<size_t>(i) * n_post;
    double* el = eligibility
                     ? eligibility->data() + static_cast<size_t>(i) * n_post
                     : nullptr;
    for (int j = 0; j < n_post; ++j) {
      const double psi_j = ppsi[j];
      const double eps_v_new = alpha * ev[j] + pre_i;
      double e;
      if (adaptive) {
        const double eps_a_new = psi_j * ev[j] + (rho - psi_j * beta) * ea[j];
        e = psi_j * (eps_v_new - beta * eps_a_new);
        ea[j] = eps_a_new;
      } else {
        e = psi_j * eps_v_new;  // LIF reduction, eps_a stays zero
      }
      ev[j] = eps_v_new;
      ft[j] = kappa * ft[j] + e;
      if (el) el[j] = e;
    }
  }
  return out;
}

BroadcastMode broadcast_mode_from_string(const std::string& s) {
  if (s == "symmetric") return BroadcastMode::symmetric;
  if (s == "random") return BroadcastMode::random;
  if (s == "adaptive") return BroadcastMode::adaptive;
  throw std::invalid_argument("unknown e-prop mode '" + s +
                              "' (valid: symmetric, random, adaptive)");
}

std::string to_string(BroadcastMode mode) {
  switch (mode) {
    case BroadcastMode::symmetric: return "symmetric";
    case BroadcastMode::random: return "random";
    case BroadcastMode::adaptive: return "adaptive";
  }
  return "?";
}

GradientSet LearningRule::gradients(const Model& model, const Batch& batch) {
  ++evals_;
  return compute(model, batch);
}

GradientSet BpttRule::compute(const Model& model, const Batch& batch) {
  Tape tape;
  TapedForward fw = model.forward_on_tape(tape, batch.inputs);
  Var loss = loss_on_tape(cfg_.loss, fw.outputs_t, batch.labels);
  if (cfg_.reg.coef > 0.0 && !fw.spikes_t.empty())
    loss = add(loss, firing_rate_regularizer(fw.spikes_t, cfg_.reg.target_hz,
                                             cfg_.reg.dt, cfg_.reg.coef));
  if (!std::isfinite(loss.value().item()))
    throw std::runtime_error("bptt: non-finite loss");
  GradientSet grads = backward(tape, loss);
  auto it = grads.find("w_rec");
  if (it != grads.end()) zero_diagonal(it->second);  // self-loops stay fixed
  return grads;
}

GradientSet bptt_gradients(const Model& model, const Batch& batch,
                           const BpttConfig& cfg) {
  BpttRule rule(cfg);
  return rule.gradients(model, batch);
}

bool EpropRule::supports(const Model& model) const {
  return dynamic_cast<const RecurrentSpikingModel*>(&model) != nullptr;
}

const Tensor& EpropRule::broadcast_for(const RecurrentSpikingModel& net) {
  const Tensor& w_out = net.readout().w_out;
  fb_.mode = cfg_.mode;
  switch (cfg_.mode) {
    case BroadcastMode::symmetric:
      fb_.b = transpose(w_out);
      break;
    case BroadcastMode::random:
      if (!fb_ready_) {
        std::mt19937_64 rng(cfg_.feedback_seed);
        fb_.b = Tensor::randn({w_out.dim(1), w_out.dim(0)}, rng,
                              1.0 / std::sqrt(double(w_out.dim(0))));
      }
      break;
    case BroadcastMode::adaptive:
      if (!fb_ready_) {
        std::mt19937_64 rng(cfg_.feedback_seed);
        fb_.b = Tensor::randn({w_out.dim(1), w_out.dim(0)}, rng,
                              1.0 / std::sqrt(double(w_out.dim(0))));
      } else {
        // B receives the transpose of every increment applied to w_out.
        fb_.b = add(fb_.b, transpose(sub(w_out, last_w_out_)));
      }
      last_w_out_ = w_out;
      break;
  }
  fb_ready_ = true;
  return fb_.b;
}

GradientSet EpropRule::compute(const Model& model, const Batch& batch) {
  const auto* net = dynamic_cast<const RecurrentSpikingModel*>(&model);
  if (!net)
    throw std::invalid_argument(
        "e-prop supports recurrent spiking layers only; got a non-spiking "
        "model");
  const AlifParams& cell = net->cell();
  const ReadoutParams& readout = net->readout();
  const bool alif = net->config().kind == CellKind::alif;
  const int b_sz = batch.inputs.dim(0);
  const int steps = batch.inputs.dim(1);
  const int n_in = cell.n_in, n_rec = cell.n_rec;
  const int n_out = readout.w_out.dim(1);

  const Tensor& bmat = broadcast_for(*net);

  // The firing-rate term needs the episode-mean rate, so it costs one
  // extra forward pass; the classification path below stays strictly
  // forward with memory independent of T beyond the traces.
  Tensor reg_g;
  const bool with_reg = cfg_.reg.coef > 0.0;
  if (with_reg)
    reg_g = rate_reg_spike_grad(net->unroll(batch.inputs).spikes,
                                cfg_.reg.target_hz, cfg_.reg.dt, cfg_.reg.coef);

  Tensor gw_in = Tensor::zeros({n_in, n_rec});
  Tensor gw_rec = Tensor::zeros({n_rec, n_rec});
  Tensor gw_out = Tensor::zeros({n_rec, n_out});
  Tensor gb_out = Tensor::zeros({n_out});

  std::vector<TraceState> tr_in(static_cast<size_t>(b_sz),
                                TraceState::zeros(n_in, n_rec));
  std::vector<TraceState> tr_rec(static_cast<size_t>(b_sz),
                                 TraceState::zeros(n_rec, n_rec));
  Tensor e_in({n_in, n_rec}), e_rec({n_rec, n_rec});
  Tensor pre_in({n_in}), pre_rec({n_rec}), psi_b({n_rec});
  Tensor zf = Tensor::zeros({b_sz, n_rec});
  double bf = 0.0;

  CellState state = zero_state(b_sz, n_rec);
  Tensor y = Tensor::zeros({b_sz, n_out});
  for (int t = 0; t < steps; ++t) {
    const Tensor x_t = time_slice(batch.inputs, t);
    const Tensor z_prev = state.z;  // synaptic delay: pre spikes are z[t-1]
    state = alif ? alif_step(cell, state, x_t) : lif_step(cell, state, x_t);
    y = readout_step(readout, y, state.z);
    const Tensor psi_t = state_pseudo(cell, state);
    const Tensor g =
        loss_output_grad_step(cfg_.loss, y, batch.labels, t, steps);
    const Tensor learn = matmul(g, bmat);  // [B x n_rec]

    for (int b = 0; b < b_sz; ++b) {
      for (int i = 0; i < n_in; ++i) pre_in(i) = x_t(b, i);
      for (int j = 0; j < n_rec; ++j) {
        pre_rec(j) = z_prev(b, j);
        psi_b(j) = psi_t(b, j);
      }
      tr_in[static_cast<size_t>(b)] =
          eprop_trace_step(cell.alpha, cell.rho, cell.beta, readout.kappa,
                           pre_in, psi_b, tr_in[static_cast<size_t>(b)], &e_in);
      tr_rec[static_cast<size_t>(b)] =
          eprop_trace_step(cell.alpha, cell.rho, cell.beta, readout.kappa,
                           pre_rec, psi_b, tr_rec[static_cast<size_t>(b)],
                           &e_rec);
      for (int j = 0; j < n_rec; ++j) {
        const double l_bj = learn(b, j);
        const double rg_j = with_reg ? reg_g(j) : 0.0;
        if (l_bj == 0.0 && rg_j == 0.0) continue;
        for (int i = 0; i < n_in; ++i)
          gw_in(i, j) += l_bj * tr_in[static_cast<size_t>(b)].filtered(i, j) +
                         rg_j * e_in(i, j);
        for (int i = 0; i < n_rec; ++i)
          gw_rec(i, j) += l_bj * tr_rec[static_cast<size_t>(b)].filtered(i, j) +
                          rg_j * e_rec(i, j);
      }
    }
    // Exact readout gradients through the leaky output filter.
    bf = readout.kappa * bf + 1.0;
    for (int b = 0; b < b_sz; ++b)
      for (int j = 0; j < n_rec; ++j)
        zf(b, j) = readout.kappa * zf(b, j) + state.z(b, j);
    for (int b = 0; b < b_sz; ++b)
      for (int k = 0; k < n_out; ++k) {
        const double gv = g(b, k);
        if (gv == 0.0) continue;
        gb_out(k) += bf * gv;
        for (int j = 0; j < n_rec; ++j) gw_out(j, k) += zf(b, j) * gv;
      }
  }

  zero_diagonal(gw_rec);
  GradientSet out;
  out["w_in"] = std::move(gw_in);
  out["w_rec"] = std::move(gw_rec);
  out["w_out"] = std::move(gw_out);
  out["b_out"] = std::move(gb_out);
  for (auto& [id, g] : out) ensure_finite(g, "eprop_gradients");
  return out;
}

GradientSet eprop_gradients(const Model& model, const Batch& batch,
                            EpropConfig cfg) {
  EpropRule rule(cfg);
  return rule.gradients(model, batch);
}

void ManhattanConfig::validate() const {
  if (delta <= 0.0)
    throw std::invalid_argument("manhattan delta must be positive");
  if (g_min.has_value() != g_max.has_value())
    throw std::invalid_argument(
        "manhattan conductance bounds need both g_min and g_max");
  if (g_min && *g_min >= *g_max)
    throw std::invalid_argument("manhattan bounds must satisfy g_min < g_max");
}

GradientSet manhattan_update(const GradientSet& grads, const ParamMap& weights,
                             const ManhattanConfig& cfg) {
  cfg.validate();
  GradientSet deltas;
  for (const auto& [id, g] : grads) {
    auto wit = weights.find(id);
    if (wit == weights.end())
      throw std::invalid_argument("manhattan_update: no weight named '" + id +
                                  "'");
    const Tensor& w = wit->second;
    require_same_shape(w, g, "manhattan_update");
    Tensor d = Tensor::zeros(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double gv = g.data()[i];
      double step = gv > 0.0 ? -cfg.delta : gv < 0.0 ? cfg.delta : 0.0;
      if (cfg.g_min) {
        const double target =
            std::clamp(w.data()[i] + step, *cfg.g_min, *cfg.g_max);
        step = target - w.data()[i];
      }
      d.data()[i] = step;
    }
    deltas[id] = std::move(d);
  }
  return deltas;
}

GradientSet ManhattanRule::compute(const Model& model, const Batch& batch) {
  GradientSet grads = inner_.gradients(model, batch);
  GradientSet deltas = manhattan_update(grads, model.params(), cfg_);
  // Report -delta so the naive optimizer applies exactly the Manhattan step.
  for (auto& [id, d] : deltas) d = neg(d);
  return deltas;
}

}  // namespace spikekit
