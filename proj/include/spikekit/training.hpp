#pragma once

#include <map>
#include <string>
#include <vector>

#include "spikekit/data.hpp"
#include "spikekit/loss.hpp"
#include "spikekit/models.hpp"
#include "spikekit/rules.hpp"

namespace spikekit {

enum class OptimizerKind { sgd, adam, naive };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

OptimizerKind optimizer_kind_from_string(const std::string& s);

struct AdamSlot {
  Tensor m, v;
};

Tensor sgd_step(const Tensor& w, const Tensor& g, double lr);
Tensor adam_step(const Tensor& w, const Tensor& g, AdamSlot& slot, int t,
                 const OptimizerConfig& cfg);
/// w <- w - g exactly, so recorded weight deltas equal negated gradients.
Tensor apply_naive(const Tensor& w, const Tensor& g);
ParamMap apply_naive(const ParamMap& params, const GradientSet& grads);

/// Owns per-parameter state (Adam moments); one instance per training run.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);
  void apply(Model& model, const GradientSet& grads);
  int steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::map<std::string, AdamSlot> slots_;
  int t_ = 0;
};

/// Associates a model with a loss function and optional metrics.
struct EvaluatorConfig {
  LossConfig loss;
  bool metric_accuracy = true;
  bool metric_firing_rate = true;
  double dt = 1e-3;
  int chunk = 512;  // evaluation minibatch size
};

struct EvalResult {
  double loss = 0.0;
  std::map<std::string, double> metrics;
};

EvalResult evaluate(const Model& model, const EvaluatorConfig& cfg,
                    const Batch& batch);
EvalResult evaluate_dataset(const Model& model, const EvaluatorConfig& cfg,
                            const Dataset& data);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double firing_rate = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool has_validation = false;
};

/// Shuffled minibatch loop; per-epoch metrics on the training set and an
/// optional validation split. Deterministic under a fixed seed. Divergence
/// (non-finite loss) aborts with a diagnostic naming epoch and step.
/// `on_epoch`, when set, fires after each epoch's stats are computed.
std::vector<EpochStats> train(
    Model& model, LearningRule& rule, Optimizer& opt, const Dataset& data,
    const EvaluatorConfig& ev, const TrainConfig& cfg,
    const Dataset* validation = nullptr,
    const std::function<void(const EpochStats&)>& on_epoch = {});

struct DeviationStat {
  double cosine = 0.0;
  double rel_l2 = 0.0;
  double bias = 0.0;
};

/// Per-step record of every rule's weight delta and its deviation from the
/// reference rule, per parameter plus a flattened "_all" aggregate.
struct ComparisonRecord {
  int step = 0;
  std::map<std::string, ParamMap> deltas;  // rule -> param -> delta
  std::map<std::string, std::map<std::string, DeviationStat>> stats;
};

struct CompareConfig {
  int steps = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// The primary rule trains its model normally; every clone is re-synced to
/// the primary's parameters before each step, computes its own update on
/// the identical state and batch, and the deltas are recorded. Deviation
/// stats are taken against the primary (reference) rule. Costs exactly one
/// gradient evaluation per rule per step.
std::vector<ComparisonRecord> compare_gradients(
    Model& model, LearningRule& primary,
    const std::vector<LearningRule*>& others, const Dataset& data,
    Optimizer& primary_opt, const OptimizerConfig& clone_opt,
    const CompareConfig& cfg);

DeviationStat deviation_between(const ParamMap& delta, const ParamMap& ref,
                                const std::string& param);  // "" = flattened
double cosine_similarity_flat(const ParamMap& a, const ParamMap& b);

}  // namespace spikekit
