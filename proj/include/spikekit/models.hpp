#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spikekit/neurons.hpp"

namespace spikekit {

enum class CellKind { lif, alif };

struct SpikingNetConfig {
  CellKind kind = CellKind::alif;
  int n_in = 1;
  int n_rec = 32;
  int n_out = 2;
  double alpha = std::exp(-1.0 / 20.0);
  double rho = std::exp(-1.0 / 200.0);
  double kappa = std::exp(-1.0 / 20.0);
  double beta = 0.07;
  double v_th = 1.0;
  double gamma = 0.3;
};

struct MlpConfig {
  std::vector<int> dims;  // e.g. {784, 64, 32, 10}
  Activation hidden_act = Activation::relu;
};

/// Plain forward pass results. `outputs_t` has one [batch x n_out] entry per
/// timestep (a single entry for feed-forward models); `states` is empty for
/// non-spiking models.
struct ForwardOutputs {
  std::vector<Tensor> outputs_t;
  std::vector<CellState> states;
};

/// Recorded forward pass: per-step output and spike Vars on the caller's tape.
struct TapedForward {
  std::vector<Var> outputs_t;
  std::vector<Var> spikes_t;
};

struct UnrollResult {
  Tensor spikes;   // [batch x T x n_rec]
  Tensor outputs;  // [batch x T x n_out]
  std::vector<CellState> states;
};

/// A trainable network: named parameters plus plain and recorded forward
/// passes. Parameters are read-only during a forward pass; clones share
/// nothing with the original.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::unique_ptr<Model> clone() const = 0;

  virtual std::vector<std::string> param_ids() const = 0;
  virtual const Tensor& param(const std::string& id) const = 0;
  virtual void set_param(const std::string& id, Tensor value) = 0;
  /// Re-applies structural invariants (e.g. zero self-loop diagonal) after
  /// a parameter update.
  virtual void enforce_constraints() {}

  virtual int output_dim() const = 0;
  virtual bool is_spiking() const { return false; }

  virtual ForwardOutputs forward(const Tensor& inputs) const = 0;
  /// Records the forward pass on `tape`; every trainable parameter is
  /// registered on the tape under its id.
  virtual TapedForward forward_on_tape(Tape& tape,
                                       const Tensor& inputs) const = 0;

  ParamMap params() const;
  void set_params(const ParamMap& params);
};

class RecurrentSpikingModel : public Model {
 public:
  RecurrentSpikingModel(SpikingNetConfig cfg, std::uint64_t seed);

  const SpikingNetConfig& config() const { return cfg_; }
  const AlifParams& cell() const { return cell_; }
  const ReadoutParams& readout() const { return readout_; }

  UnrollResult unroll(const Tensor& x) const;

  std::unique_ptr<Model> clone() const override;
  std::vector<std::string> param_ids() const override;
  const Tensor& param(const std::string& id) const override;
  void set_param(const std::string& id, Tensor value) override;
  void enforce_constraints() override;
  int output_dim() const override { return cfg_.n_out; }
  bool is_spiking() const override { return true; }
  ForwardOutputs forward(const Tensor& inputs) const override;
  TapedForward forward_on_tape(Tape& tape, const Tensor& inputs) const override;

 private:
  SpikingNetConfig cfg_;
  AlifParams cell_;  // LIF uses the base fields and ignores rho/beta
  ReadoutParams readout_;
};

class MlpModel : public Model {
 public:
  MlpModel(MlpConfig cfg, std::uint64_t seed);

  const std::vector<MlpLayer>& layers() const { return layers_; }

  std::unique_ptr<Model> clone() const override;
  std::vector<std::string> param_ids() const override;
  const Tensor& param(const std::string& id) const override;
  void set_param(const std::string& id, Tensor value) override;
  int output_dim() const override;
  ForwardOutputs forward(const Tensor& inputs) const override;
  TapedForward forward_on_tape(Tape& tape, const Tensor& inputs) const override;

 private:
  MlpConfig cfg_;
  std::vector<MlpLayer> layers_;
};

/// Applies cell step then readout step for t = 1..T from a zero state.
UnrollResult unroll(const RecurrentSpikingModel& net, const Tensor& x);

/// Copies timestep t of a [batch x T x d] tensor into a [batch x d] matrix.
Tensor time_slice(const Tensor& x, int t);

}  // namespace spikekit
