#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "spikekit/loss.hpp"
#include "spikekit/models.hpp"
#include "spikekit/data.hpp"

namespace spikekit {

struct MalaConfig {
  double sigma0 = 0.01;        // base diffusion std
  double target_accept = 0.574;
  double adapt_rate = 0.02;    // multiplicative adaptation gain
  double prior_std = 1.0;      // Gaussian prior scale
  double temperature = 1.0;    // posterior sharpness

  void validate() const;
};

/// One posterior draw of all parameters plus its log-posterior.
struct WeightSample {
  ParamMap params;
  double log_post = 0.0;
  bool accepted = false;
};

/// Differentiable unnormalized log density over a parameter map.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  /// Returns (log pi(theta), grad log pi(theta)).
  virtual std::pair<double, GradientSet> value_and_grad(
      const ParamMap& params) = 0;
};

/// Chain state: current position, cached density/gradient, step scale and
/// last-step diagnostics.
struct MalaState {
  ParamMap params;
  double sigma = 0.01;
  double log_post = 0.0;
  GradientSet grad;
  double last_accept_prob = 0.0;
  double last_q_correction = 0.0;
};

MalaState mala_init(LogDensity& target, ParamMap params,
                    const MalaConfig& cfg);

/// One Metropolis-adjusted Langevin step. Proposal
///   theta' = theta - (s^2/2) g + s xi,  s = sigma / max(1, ||g||),
/// with g the gradient of the negative log posterior; accepted with the
/// exact Metropolis-Hastings correction for the position-dependent
/// proposal. A non-finite proposal density auto-rejects. With `adapt`,
/// sigma moves multiplicatively toward the target acceptance rate.
WeightSample mala_step(LogDensity& target, MalaState& state,
                       const MalaConfig& cfg, std::mt19937_64& rng,
                       bool adapt = true);

struct MalaRunConfig {
  int steps = 2000;    // recorded (post burn-in) steps
  int burn_in = 500;   // adaptive warm-up steps
  int thin = 1;        // keep every thin-th post-burn-in sample
  std::uint64_t seed = 0;
};

struct ChainEntry {
  int step;
  double log_post;
  bool accepted;
};

struct MalaRun {
  std::vector<WeightSample> samples;  // thinned, post burn-in
  std::vector<ChainEntry> chain;      // every step, including burn-in
  double final_sigma = 0.0;
  double accept_rate = 0.0;  // post burn-in
};

/// Adapts sigma during burn-in, freezes it, then samples.
MalaRun run_mala(LogDensity& target, ParamMap init, const MalaConfig& cfg,
                 const MalaRunConfig& run);

/// log pi(theta) = -temperature * N * mean_loss(theta) -
///                 ||theta||^2 / (2 prior_std^2), gradients via the
/// surrogate-gradient backward pass.
class ModelPosterior : public LogDensity {
 public:
  ModelPosterior(Model& model, Batch data, LossConfig loss,
                 const MalaConfig& cfg);
  std::pair<double, GradientSet> value_and_grad(const ParamMap& params) override;

 private:
  Model& model_;
  Batch data_;
  LossConfig loss_;
  double prior_std_;
  double temperature_;
};

struct PosteriorPrediction {
  Tensor mean_probs;  // [N x C] Monte-Carlo average of softmax outputs
  Tensor class_std;   // [N x C] across-sample standard deviation
  Tensor entropy;     // [N] predictive entropy of the mean
};

/// Needs at least two samples. The model is restored to its entry
/// parameters afterwards.
PosteriorPrediction posterior_predict(const std::vector<WeightSample>& samples,
                                      Model& model, const Tensor& inputs,
                                      const LossConfig& loss);

// Parameter-map arithmetic used by the sampler.
double params_norm(const ParamMap& p);
double params_sq_norm(const ParamMap& p);
ParamMap params_axpy(const ParamMap& a, double c, const ParamMap& b);  // a + c*b
ParamMap params_gaussian_like(const ParamMap& shape, std::mt19937_64& rng);

}  // namespace spikekit
