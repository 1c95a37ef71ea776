#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spikekit/data.hpp"
#include "spikekit/loss.hpp"
#include "spikekit/models.hpp"

namespace spikekit {

/// E-prop per-synapse traces for one weight matrix: membrane eligibility
/// vector, adaptation eligibility vector (zeros for LIF) and the
/// kappa-filtered trace, all [n_pre x n_post].
struct TraceState {
  Tensor eps_v;
  Tensor eps_a;
  Tensor filtered;

  static TraceState zeros(int n_pre, int n_post);
};

/// One recursive trace update:
///   eps_v'    = alpha * eps_v + pre          (broadcast pre over post)
///   eps_a'    = psi (.) eps_v + (rho - psi * beta) (.) eps_a
///   e         = psi (.) (eps_v' - beta * eps_a')
///   filtered' = kappa * filtered + e
/// `pre` is [n_pre] (input x[t] or previous-step spikes), `psi` is the
/// [n_post] pseudo-derivative at the current step. When `eligibility` is
/// non-null the per-synapse e is written there.
TraceState eprop_trace_step(double alpha, double rho, double beta,
                            double kappa, const Tensor& pre, const Tensor& psi,
                            const TraceState& trace,
                            Tensor* eligibility = nullptr);

enum class BroadcastMode { symmetric, random, adaptive };

/// Error-broadcast matrix B [n_out x n_rec]. Symmetric mirrors the readout
/// transpose at use time; random stays fixed after init; adaptive receives
/// the transpose of every increment applied to w_out.
struct BroadcastMatrix {
  Tensor b;
  BroadcastMode mode = BroadcastMode::symmetric;
};

BroadcastMode broadcast_mode_from_string(const std::string& s);
std::string to_string(BroadcastMode mode);

/// A learning rule consumes a model plus a batch and produces gradients
/// (the common currency applied by an optimizer). Stateless between calls
/// except for rule-owned state such as the broadcast matrix.
class LearningRule {
 public:
  virtual ~LearningRule() = default;
  virtual std::string name() const = 0;
  virtual bool supports(const Model& model) const { (void)model; return true; }

  GradientSet gradients(const Model& model, const Batch& batch);

  /// Number of gradient evaluations performed so far.
  int eval_count() const { return evals_; }

 protected:
  virtual GradientSet compute(const Model& model, const Batch& batch) = 0;

 private:
  int evals_ = 0;
};

struct BpttConfig {
  LossConfig loss;
  RateRegConfig reg;
};

/// Exact reverse-mode gradients of the mean batch loss; the spike
/// nonlinearity is handled by the registered pseudo-derivative.
class BpttRule : public LearningRule {
 public:
  explicit BpttRule(BpttConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "bptt"; }

 protected:
  GradientSet compute(const Model& model, const Batch& batch) override;

 private:
  BpttConfig cfg_;
};

GradientSet bptt_gradients(const Model& model, const Batch& batch,
                           const BpttConfig& cfg = {});

struct EpropConfig {
  BroadcastMode mode = BroadcastMode::symmetric;
  LossConfig loss;
  RateRegConfig reg;
  std::uint64_t feedback_seed = 1;  // random / adaptive B init
};

/// Online forward-mode approximation of BPTT: per-synapse eligibility
/// traces combined with a broadcast learning signal. Output-layer
/// gradients are computed exactly. Memory is independent of sequence
/// length beyond the traces themselves.
class EpropRule : public LearningRule {
 public:
  explicit EpropRule(EpropConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override {
    return "eprop_" + to_string(cfg_.mode);
  }
  bool supports(const Model& model) const override;

  const BroadcastMatrix& feedback() const { return fb_; }

 protected:
  GradientSet compute(const Model& model, const Batch& batch) override;

 private:
  const Tensor& broadcast_for(const RecurrentSpikingModel& net);

  EpropConfig cfg_;
  BroadcastMatrix fb_;
  Tensor last_w_out_;
  bool fb_ready_ = false;
};

GradientSet eprop_gradients(const Model& model, const Batch& batch,
                            EpropConfig cfg = {});

struct ManhattanConfig {
  double delta = 1e-3;
  std::optional<double> g_min;
  std::optional<double> g_max;

  void validate() const;
};

/// Fixed-magnitude update in the direction of the gradient sign, with
/// sign(0) = 0. With conductance bounds present, w + delta is clipped into
/// [g_min, g_max]. Returns the weight deltas.
GradientSet manhattan_update(const GradientSet& grads, const ParamMap& weights,
                             const ManhattanConfig& cfg);

/// Manhattan training rule: surrogate gradients from BPTT, turned into
/// fixed-size signed weight deltas. Pair with the naive optimizer so the
/// recorded update is exactly the Manhattan delta.
class ManhattanRule : public LearningRule {
 public:
  ManhattanRule(ManhattanConfig cfg, BpttConfig grad_cfg = {})
      : cfg_(cfg), inner_(grad_cfg) {
    cfg_.validate();
  }
  std::string name() const override {
    return cfg_.g_min ? "manhattan_constrained" : "manhattan";
  }

 protected:
  GradientSet compute(const Model& model, const Batch& batch) override;

 private:
  ManhattanConfig cfg_;
  BpttRule inner_;
};

}  // namespace spikekit
