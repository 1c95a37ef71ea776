#include "spikekit/models.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

ParamMap Model::params() const {
  ParamMap out;
  for (const auto& id : param_ids()) out[id] = param(id);
  return out;
}

void Model::set_params(const ParamMap& params) {
  for (const auto& [id, value] : params) set_param(id, value);
  enforce_constraints();
}

Tensor time_slice(const Tensor& x, int t) {
  if (x.rank() != 3)
    throw std::invalid_argument("time_slice expects [batch x T x d], got " +
                                x.shape_str());
  const int b = x.dim(0), steps = x.dim(1), d = x.dim(2);
  if (t < 0 || t >= steps)
    throw std::invalid_argument("time index " + std::to_string(t) +
                                " out of range for T=" + std::to_string(steps));
  Tensor out({b, d});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = x(i, t, j);
  return out;
}

namespace {

void write_time_slice(Tensor& dest, int t, const Tensor& src) {
  for (int i = 0; i < src.dim(0); ++i)
    for (int j = 0; j < src.dim(1); ++j) dest(i, t, j) = src(i, j);
}

void check_sequence_input(const Tensor& x, int n_in) {
  if (x.rank() != 3 || x.dim(2) != n_in)
    throw std::invalid_argument("spiking model expects [batch x T x " +
                                std::to_string(n_in) + "] input, got " +
                                x.shape_str());
  if (x.dim(1) < 1)
    throw std::invalid_argument("unroll needs at least one timestep");
}

}  // namespace

RecurrentSpikingModel::RecurrentSpikingModel(SpikingNetConfig cfg,
                                             std::uint64_t seed)
    : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  cell_.n_in = cfg.n_in;
  cell_.n_rec = cfg.n_rec;
  cell_.alpha = cfg.alpha;
  cell_.v_th = cfg.v_th;
  cell_.rho = cfg.rho;
  cell_.beta = cfg.kind == CellKind::alif ? cfg.beta : 0.0;
  cell_.pd.gamma = cfg.gamma;
  cell_.w_in = Tensor::randn({cfg.n_in, cfg.n_rec}, rng,
                             1.0 / std::sqrt(static_cast<double>(cfg.n_in)));
  cell_.w_rec = Tensor::randn({cfg.n_rec, cfg.n_rec}, rng,
                              1.0 / std::sqrt(static_cast<double>(cfg.n_rec)));
  zero_diagonal(cell_.w_rec);
  readout_.kappa = cfg.kappa;
  readout_.w_out = Tensor::randn({cfg.n_rec, cfg.n_out}, rng,
                                 1.0 / std::sqrt(static_cast<double>(cfg.n_rec)));
  readout_.b_out = Tensor::zeros({cfg.n_out});
  cell_.validate();
  readout_.validate();
}

std::unique_ptr<Model> RecurrentSpikingModel::clone() const {
  return std::make_unique<RecurrentSpikingModel>(*this);
}

std::vector<std::string> RecurrentSpikingModel::param_ids() const {
  return {"b_out", "w_in", "w_out", "w_rec"};
}

const Tensor& RecurrentSpikingModel::param(const std::string& id) const {
  if (id == "w_in") return cell_.w_in;
  if (id == "w_rec") return cell_.w_rec;
  if (id == "w_out") return readout_.w_out;
  if (id == "b_out") return readout_.b_out;
  throw std::invalid_argument("unknown parameter '" + id + "'");
}

void RecurrentSpikingModel::set_param(const std::string& id, Tensor value) {
  const Tensor& current = param(id);
  require_same_shape(current, value, "set_param");
  if (id == "w_in") cell_.w_in = std::move(value);
  else if (id == "w_rec") { cell_.w_rec = std::move(value); zero_diagonal(cell_.w_rec); }
  else if (id == "w_out") readout_.w_out = std::move(value);
  else readout_.b_out = std::move(value);
}

void RecurrentSpikingModel::enforce_constraints() {
  zero_diagonal(cell_.w_rec);
}

UnrollResult RecurrentSpikingModel::unroll(const Tensor& x) const {
  check_sequence_input(x, cfg_.n_in);
  const int batch = x.dim(0), steps = x.dim(1);
  UnrollResult r;
  r.spikes = Tensor::zeros({batch, steps, cfg_.n_rec});
  r.outputs = Tensor::zeros({batch, steps, cfg_.n_out});
  r.states.reserve(static_cast<size_t>(steps));
  CellState state = zero_state(batch, cfg_.n_rec);
  Tensor y = Tensor::zeros({batch, cfg_.n_out});
  for (int t = 0; t < steps; ++t) {
    const Tensor x_t = time_slice(x, t);
    state = cfg_.kind == CellKind::alif ? alif_step(cell_, state, x_t)
                                        : lif_step(cell_, state, x_t);
    y = readout_step(readout_, y, state.z);
    write_time_slice(r.spikes, t, state.z);
    write_time_slice(r.outputs, t, y);
    r.states.push_back(state);
  }
  return r;
}

ForwardOutputs RecurrentSpikingModel::forward(const Tensor& inputs) const {
  UnrollResult r = unroll(inputs);
  ForwardOutputs out;
  const int steps = inputs.dim(1);
  out.outputs_t.reserve(static_cast<size_t>(steps));
  for (int t = 0; t < steps; ++t)
    out.outputs_t.push_back(time_slice(r.outputs, t));
  out.states = std::move(r.states);
  return out;
}

TapedForward RecurrentSpikingModel::forward_on_tape(Tape& tape,
                                                    const Tensor& x) const {
  check_sequence_input(x, cfg_.n_in);
  const int batch = x.dim(0), steps = x.dim(1);
  const Var w_in = tape.param("w_in", cell_.w_in);
  const Var w_rec = tape.param("w_rec", cell_.w_rec);
  const Var w_out = tape.param("w_out", readout_.w_out);
  const Var b_out = tape.param("b_out", readout_.b_out);

  TapedForward out;
  CellStateT<Var> state{Var(Tensor::zeros({batch, cfg_.n_rec})),
                        Var(Tensor::zeros({batch, cfg_.n_rec})),
                        Var(Tensor::zeros({batch, cfg_.n_rec}))};
  Var y(Tensor::zeros({batch, cfg_.n_out}));
  for (int t = 0; t < steps; ++t) {
    const Var x_t(time_slice(x, t));
    state = cfg_.kind == CellKind::alif
                ? alif_step_t<Var>(cell_, state, x_t, w_in, w_rec)
                : lif_step_t<Var>(cell_, state, x_t, w_in, w_rec);
    y = readout_step_t<Var>(readout_, y, state.z, w_out, b_out);
    out.spikes_t.push_back(state.z);
    out.outputs_t.push_back(y);
  }
  return out;
}

MlpModel::MlpModel(MlpConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.dims.size() < 2)
    throw std::invalid_argument("MLP needs at least input and output dims");
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i + 1 < cfg_.dims.size(); ++i) {
    MlpLayer layer;
    const int fan_in = cfg_.dims[i], fan_out = cfg_.dims[i + 1];
    layer.w = Tensor::randn({fan_in, fan_out}, rng,
                            1.0 / std::sqrt(static_cast<double>(fan_in)));
    layer.b = Tensor::zeros({fan_out});
    const bool last = i + 2 == cfg_.dims.size();
    layer.act = last ? Activation::linear : cfg_.hidden_act;
    layers_.push_back(std::move(layer));
  }
}

std::unique_ptr<Model> MlpModel::clone() const {
  return std::make_unique<MlpModel>(*this);
}

std::vector<std::string> MlpModel::param_ids() const {
  std::vector<std::string> ids;
  for (size_t i = 0; i < layers_.size(); ++i) {
    ids.push_back("layer" + std::to_string(i) + ".b");
    ids.push_back("layer" + std::to_string(i) + ".w");
  }
  return ids;
}

const Tensor& MlpModel::param(const std::string& id) const {
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (id == "layer" + std::to_string(i) + ".w") return layers_[i].w;
    if (id == "layer" + std::to_string(i) + ".b") return layers_[i].b;
  }
  throw std::invalid_argument("unknown parameter '" + id + "'");
}

void MlpModel::set_param(const std::string& id, Tensor value) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (id == "layer" + std::to_string(i) + ".w") {
      require_same_shape(layers_[i].w, value, "set_param");
      layers_[i].w = std::move(value);
      return;
    }
    if (id == "layer" + std::to_string(i) + ".b") {
      require_same_shape(layers_[i].b, value, "set_param");
      layers_[i].b = std::move(value);
      return;
    }
  }
  throw std::invalid_argument("unknown parameter '" + id + "'");
}

int MlpModel::output_dim() const { return cfg_.dims.back(); }

ForwardOutputs MlpModel::forward(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.dim(1) != cfg_.dims.front())
    throw std::invalid_argument("MLP expects [batch x " +
                                std::to_string(cfg_.dims.front()) +
                                "] input, got " + inputs.shape_str());
  ForwardOutputs out;
  out.outputs_t.push_back(mlp_forward(layers_, inputs));
  return out;
}

TapedForward MlpModel::forward_on_tape(Tape& tape, const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.dim(1) != cfg_.dims.front())
    throw std::invalid_argument("MLP expects [batch x " +
                                std::to_string(cfg_.dims.front()) +
                                "] input, got " + inputs.shape_str());
  Var h(inputs);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Var w = tape.param("layer" + std::to_string(i) + ".w", layers_[i].w);
    const Var b = tape.param("layer" + std::to_string(i) + ".b", layers_[i].b);
    h = apply_activation(add_rowvec(matmul(h, w), b), layers_[i].act);
  }
  TapedForward out;
  out.outputs_t.push_back(h);
  return out;
}

UnrollResult unroll(const RecurrentSpikingModel& net, const Tensor& x) {
  return net.unroll(x);
}

}  // namespace spikekit
