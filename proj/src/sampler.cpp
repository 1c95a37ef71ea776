#include "spikekit/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "spikekit/rules.hpp"

namespace spikekit {

namespace {

std::int64_t params_count(const ParamMap& p) {
  std::int64_t n = 0;
  for (const auto& [id, t] : p) n += t.size();
  return n;
}

/// ||a - mu||^2 where mu = b + c * g, accumulated without materializing mu.
double sq_dist_to_drifted(const ParamMap& a, const ParamMap& b, double c,
                          const GradientSet& g) {
  double s = 0.0;
  for (const auto& [id, ta] : a) {
    const Tensor& tb = b.at(id);
    const Tensor& tg = g.at(id);
    for (std::int64_t i = 0; i < ta.size(); ++i) {
      const double d = ta.data()[i] - (tb.data()[i] + c * tg.data()[i]);
      s += d * d;
    }
  }
  return s;
}

}  // namespace

void MalaConfig::validate() const {
  if (sigma0 <= 0.0) throw std::invalid_argument("sigma0 must be positive");
  if (target_accept <= 0.0 || target_accept >= 1.0)
    throw std::invalid_argument("target_accept must lie in (0,1)");
  if (prior_std <= 0.0) throw std::invalid_argument("prior_std must be positive");
}

double params_sq_norm(const ParamMap& p) {
  double s = 0.0;
  for (const auto& [id, t] : p)
    for (double v : t.values()) s += v * v;
  return s;
}

double params_norm(const ParamMap& p) { return std::sqrt(params_sq_norm(p)); }

ParamMap params_axpy(const ParamMap& a, double c, const ParamMap& b) {
  ParamMap out = a;
  for (auto& [id, t] : out) {
    const Tensor& tb = b.at(id);
    require_same_shape(t, tb, "params_axpy");
    for (std::int64_t i = 0; i < t.size(); ++i)
      t.data()[i] += c * tb.data()[i];
  }
  return out;
}

ParamMap params_gaussian_like(const ParamMap& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ParamMap out = shape;
  for (auto& [id, t] : out)
    for (auto& v : t.values()) v = gauss(rng);
  return out;
}

MalaState mala_init(LogDensity& target, ParamMap params,
                    const MalaConfig& cfg) {
  cfg.validate();
  MalaState st;
  st.params = std::move(params);
  st.sigma = cfg.sigma0;
  auto [lp, g] = target.value_and_grad(st.params);
  if (!std::isfinite(lp))
    throw std::runtime_error("log-posterior is not finite at the initial point");
  st.log_post = lp;
  st.grad = std::move(g);
  return st;
}

WeightSample mala_step(LogDensity& target, MalaState& state,
                       const MalaConfig& cfg, std::mt19937_64& rng,
                       bool adapt) {
  const double d = static_cast<double>(params_count(state.params));

  // Forward proposal: theta' = theta + (s^2/2) grad_logpi + s * xi.
  const double gnorm = params_norm(state.grad);
  const double s = state.sigma / std::max(1.0, gnorm);
  const ParamMap noise = params_gaussian_like(state.params, rng);
  ParamMap proposal =
      params_axpy(state.params, 0.5 * s * s, state.grad);
  proposal = params_axpy(proposal, s, noise);

  double accept_prob = 0.0;
  double q_correction = 0.0;
  bool accepted = false;
  double lp_new = -std::numeric_limits<double>::infinity();
  GradientSet g_new;
  bool proposal_ok = true;
  try {
    auto [lp, g] = target.value_and_grad(proposal);
    lp_new = lp;
    g_new = std::move(g);
    proposal_ok = std::isfinite(lp_new);
  } catch (const std::runtime_error&) {
    proposal_ok = false;  // auto-reject on numeric failure, not a crash
  }

  if (proposal_ok) {
    const double gnorm_new = params_norm(g_new);
    const double s_new = state.sigma / std::max(1.0, gnorm_new);
    // log q(theta | theta') - log q(theta' | theta), with the
    // normalization terms kept since s depends on position.
    const double log_q_rev =
        -d * std::log(s_new) -
        sq_dist_to_drifted(state.params, proposal, 0.5 * s_new * s_new,
                           g_new) /
            (2.0 * s_new * s_new);
    const double log_q_fwd =
        -d * std::log(s) -
        sq_dist_to_drifted(proposal, state.params, 0.5 * s * s, state.grad) /
            (2.0 * s * s);
    q_correction = log_q_rev - log_q_fwd;
    const double log_ratio = lp_new - state.log_post + q_correction;
    accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) < accept_prob) {
      state.params = std::move(proposal);
      state.log_post = lp_new;
      state.grad = std::move(g_new);
      accepted = true;
    }
  }

  if (adapt) {
    state.sigma *= std::exp(cfg.adapt_rate * (accept_prob - cfg.target_accept));
    state.sigma = std::clamp(state.sigma, 1e-10, 1e6);
  }
  state.last_accept_prob = accept_prob;
  state.last_q_correction = q_correction;

  WeightSample sample;
  sample.params = state.params;
  sample.log_post = state.log_post;
  sample.accepted = accepted;
  return sample;
}

MalaRun run_mala(LogDensity& target, ParamMap init, const MalaConfig& cfg,
                 const MalaRunConfig& run) {
  std::mt19937_64 rng(run.seed);
  MalaState st = mala_init(target, std::move(init), cfg);
  MalaRun out;
  int accepted = 0;
  const int total = run.burn_in + run.steps;
  for (int step = 0; step < total; ++step) {
    const bool warm = step < run.burn_in;
    WeightSample s = mala_step(target, st, cfg, rng, warm);
    out.chain.push_back({step, s.log_post, s.accepted});
    if (!warm) {
      accepted += s.accepted ? 1 : 0;
      const int k = step - run.burn_in;
      if (run.thin <= 1 || k % run.thin == 0) out.samples.push_back(std::move(s));
    }
  }
  out.final_sigma = st.sigma;
  out.accept_rate = run.steps > 0 ? static_cast<double>(accepted) / run.steps : 0.0;
  return out;
}

ModelPosterior::ModelPosterior(Model& model, Batch data, LossConfig loss,
                               const MalaConfig& cfg)
    : model_(model),
      data_(std::move(data)),
      loss_(loss),
      prior_std_(cfg.prior_std),
      temperature_(cfg.temperature) {}

std::pair<double, GradientSet> ModelPosterior::value_and_grad(
    const ParamMap& params) {
  model_.set_params(params);
  const double n = static_cast<double>(data_.size());

  Tape tape;
  TapedForward fw = model_.forward_on_tape(tape, data_.inputs);
  Var loss = loss_on_tape(loss_, fw.outputs_t, data_.labels);
  const double mean_loss = loss.value().item();
  GradientSet loss_grads = backward(tape, loss);

  const double log_post =
      -temperature_ * n * mean_loss -
      params_sq_norm(params) / (2.0 * prior_std_ * prior_std_);

  GradientSet grads;
  const double inv_var = 1.0 / (prior_std_ * prior_std_);
  for (const auto& [id, g] : loss_grads) {
    Tensor out = g;
    const Tensor& theta = params.at(id);
    for (std::int64_t i = 0; i < out.size(); ++i)
      out.data()[i] = -temperature_ * n * out.data()[i] -
                      theta.data()[i] * inv_var;
    grads[id] = std::move(out);
  }
  return {log_post, std::move(grads)};
}

PosteriorPrediction posterior_predict(const std::vector<WeightSample>& samples,
                                      Model& model, const Tensor& inputs,
                                      const LossConfig& loss) {
  if (samples.size() < 2)
    throw std::invalid_argument("posterior_predict needs at least 2 samples");
  const ParamMap entry = model.params();

  Tensor mean, m2;
  const double count = static_cast<double>(samples.size());
  for (const WeightSample& s : samples) {
    model.set_params(s.params);
    ForwardOutputs fw = model.forward(inputs);
    const Tensor probs = predict_probs(loss, fw.outputs_t);
    if (mean.size() == 0) {
      mean = Tensor::zeros(probs.shape());
      m2 = Tensor::zeros(probs.shape());
    }
    for (std::int64_t i = 0; i < probs.size(); ++i) {
      mean.data()[i] += probs.data()[i];
      m2.data()[i] += probs.data()[i] * probs.data()[i];
    }
  }
  model.set_params(entry);

  PosteriorPrediction out;
  out.mean_probs = Tensor::zeros(mean.shape());
  out.class_std = Tensor::zeros(mean.shape());
  for (std::int64_t i = 0; i < mean.size(); ++i) {
    const double mu = mean.data()[i] / count;
    const double var = std::max(0.0, m2.data()[i] / count - mu * mu);
    out.mean_probs.data()[i] = mu;
    out.class_std.data()[i] = std::sqrt(var);
  }
  out.entropy = Tensor({out.mean_probs.dim(0)});
  for (int i = 0; i < out.mean_probs.dim(0); ++i) {
    double h = 0.0;
    for (int j = 0; j < out.mean_probs.dim(1); ++j) {
      const double p = out.mean_probs(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    out.entropy(i) = h;
  }
  return out;
}

}  // namespace spikekit
