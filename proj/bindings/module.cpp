#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spikekit/encoding.hpp"
#include "spikekit/experiment.hpp"
#include "spikekit/rules.hpp"
#include "spikekit/sampler.hpp"
#include "spikekit/training.hpp"

namespace py = pybind11;
using namespace spikekit;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape.push_back(static_cast<int>(a.shape(i)));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int d : t.shape()) shape.push_back(d);
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

ParamMap to_params(const py::dict& d) {
  ParamMap p;
  for (auto item : d)
    p[item.first.cast<std::string>()] =
        to_tensor(item.second.cast<py::array_t<double, py::array::c_style |
                                                           py::array::forcecast>>());
  return p;
}

py::dict from_params(const ParamMap& p) {
  py::dict d;
  for (const auto& [id, t] : p) d[py::str(id)] = to_array(t);
  return d;
}

LossConfig make_loss(const std::string& loss, const std::string& readout) {
  LossConfig cfg;
  cfg.kind = loss_kind_from_string(loss);
  cfg.readout = readout_mode_from_string(readout);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "spikekit core: spiking networks, learning rules, encoders";

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def("param_ids", &Model::param_ids)
      .def("params", [](const Model& self) { return from_params(self.params()); })
      .def("set_params",
           [](Model& self, const py::dict& params) {
             self.set_params(to_params(params));
           })
      .def("output_dim", &Model::output_dim)
      .def("is_spiking", &Model::is_spiking);

  m.def(
      "make_spiking",
      [](const std::string& kind, int n_in, int n_rec, int n_out,
         std::uint64_t seed, double alpha, double rho, double kappa,
         double beta, double v_th, double gamma) -> std::shared_ptr<Model> {
        SpikingNetConfig cfg;
        cfg.kind = kind == "lif" ? CellKind::lif : CellKind::alif;
        cfg.n_in = n_in;
        cfg.n_rec = n_rec;
        cfg.n_out = n_out;
        cfg.alpha = alpha;
        cfg.rho = rho;
        cfg.kappa = kappa;
        cfg.beta = beta;
        cfg.v_th = v_th;
        cfg.gamma = gamma;
        return std::make_shared<RecurrentSpikingModel>(cfg, seed);
      },
      py::arg("kind"), py::arg("n_in"), py::arg("n_rec"), py::arg("n_out"),
      py::arg("seed") = 0, py::arg("alpha") = std::exp(-1.0 / 20.0),
      py::arg("rho") = std::exp(-1.0 / 200.0),
      py::arg("kappa") = std::exp(-1.0 / 20.0), py::arg("beta") = 0.07,
      py::arg("v_th") = 1.0, py::arg("gamma") = 0.3);

  m.def(
      "make_mlp",
      [](const std::vector<int>& dims, const std::string& activation,
         std::uint64_t seed) -> std::shared_ptr<Model> {
        MlpConfig cfg;
        cfg.dims = dims;
        cfg.hidden_act = activation_from_string(activation);
        return std::make_shared<MlpModel>(cfg, seed);
      },
      py::arg("dims"), py::arg("activation") = "relu", py::arg("seed") = 0);

  m.def(
      "unroll",
      [](const std::shared_ptr<Model>& model, const py::array_t<double>& x) {
        auto* net = dynamic_cast<RecurrentSpikingModel*>(model.get());
        if (!net) throw std::invalid_argument("unroll needs a spiking model");
        UnrollResult r = net->unroll(to_tensor(x));
        return py::make_tuple(to_array(r.spikes), to_array(r.outputs));
      },
      py::arg("model"), py::arg("x"),
      "Returns (spikes [B,T,n_rec], outputs [B,T,n_out]) from a zero state.");

  m.def(
      "predict_probs",
      [](const std::shared_ptr<Model>& model, const py::array_t<double>& x,
         const std::string& loss, const std::string& readout) {
        ForwardOutputs fw = model->forward(to_tensor(x));
        return to_array(predict_probs(make_loss(loss, readout), fw.outputs_t));
      },
      py::arg("model"), py::arg("x"),
      py::arg("loss") = "categorical_crossentropy", py::arg("readout") = "mean");

  m.def(
      "bptt_gradients",
      [](const std::shared_ptr<Model>& model, const py::array_t<double>& x,
         const std::vector<int>& labels, const std::string& loss,
         const std::string& readout, double reg_coef, double reg_target_hz,
         double dt) {
        BpttConfig cfg;
        cfg.loss = make_loss(loss, readout);
        cfg.reg = {reg_coef, reg_target_hz, dt};
        Batch batch{to_tensor(x), labels};
        return from_params(bptt_gradients(*model, batch, cfg));
      },
      py::arg("model"), py::arg("x"), py::arg("labels"),
      py::arg("loss") = "categorical_crossentropy", py::arg("readout") = "mean",
      py::arg("reg_coef") = 0.0, py::arg("reg_target_hz") = 10.0,
      py::arg("dt") = 1e-3);

  m.def(
      "eprop_gradients",
      [](const std::shared_ptr<Model>& model, const py::array_t<double>& x,
         const std::vector<int>& labels, const std::string& mode,
         const std::string& loss, const std::string& readout,
         std::uint64_t feedback_seed) {
        EpropConfig cfg;
        cfg.mode = broadcast_mode_from_string(mode);
        cfg.loss = make_loss(loss, readout);
        cfg.feedback_seed = feedback_seed;
        Batch batch{to_tensor(x), labels};
        return from_params(eprop_gradients(*model, batch, cfg));
      },
      py::arg("model"), py::arg("x"), py::arg("labels"),
      py::arg("mode") = "symmetric",
      py::arg("loss") = "categorical_crossentropy", py::arg("readout") = "mean",
      py::arg("feedback_seed") = 1);

  m.def(
      "manhattan_update",
      [](const py::dict& grads, const py::dict& weights, double delta,
         py::object g_min, py::object g_max) {
        ManhattanConfig cfg;
        cfg.delta = delta;
        if (!g_min.is_none()) cfg.g_min = g_min.cast<double>();
        if (!g_max.is_none()) cfg.g_max = g_max.cast<double>();
        return from_params(
            manhattan_update(to_params(grads), to_params(weights), cfg));
      },
      py::arg("grads"), py::arg("weights"), py::arg("delta") = 1e-3,
      py::arg("g_min") = py::none(), py::arg("g_max") = py::none());

  m.def(
      "encode",
      [](const std::string& kind, const py::array_t<double>& signal,
         double factor, double threshold, int window) {
        const Tensor s = to_tensor(signal);
        SpikeTrain train;
        if (kind == "tc") train = encode_tc(s, factor);
        else if (kind == "sf") train = encode_sf(s, threshold);
        else if (kind == "mw") train = encode_mw(s, threshold, window);
        else throw std::invalid_argument("unknown encoder '" + kind + "'");
        py::dict out;
        out["values"] = to_array(train.values);
        out["initial"] = train.initial;
        out["threshold"] = train.threshold;
        out["sparsity"] = sparsity(train);
        return out;
      },
      py::arg("kind"), py::arg("signal"), py::arg("factor") = 1.0,
      py::arg("threshold") = 0.1, py::arg("window") = 3);

  m.def(
      "decode_sf",
      [](const py::array_t<double>& values, double initial, double threshold) {
        SpikeTrain train;
        train.kind = EncoderKind::sf;
        train.values = to_tensor(values);
        train.initial = initial;
        train.threshold = threshold;
        return to_array(decode_sf(train));
      },
      py::arg("values"), py::arg("initial"), py::arg("threshold"));

  m.def(
      "synthetic_task",
      [](const std::string& name, std::uint64_t seed, int n, int steps,
         double noise, int dims, int classes) {
        SyntheticConfig cfg;
        cfg.n = n;
        cfg.steps = steps;
        cfg.noise = noise;
        cfg.dims = dims;
        cfg.classes = classes;
        const Dataset d = synthetic_task(name, seed, cfg);
        return py::make_tuple(to_array(d.inputs), d.labels, d.class_count);
      },
      py::arg("name"), py::arg("seed") = 0, py::arg("n") = 256,
      py::arg("steps") = 50, py::arg("noise") = 0.1, py::arg("dims") = 2,
      py::arg("classes") = 2);

  m.def(
      "train_model",
      [](const std::shared_ptr<Model>& model, const std::string& rule_kind,
         const py::array_t<double>& x, const std::vector<int>& labels,
         int classes, int epochs, int batch_size, std::uint64_t seed,
         const std::string& optimizer, double lr, const std::string& mode,
         double delta) {
        Dataset data;
        data.inputs = to_tensor(x);
        data.labels = labels;
        data.class_count = classes;
        std::unique_ptr<LearningRule> rule;
        if (rule_kind == "bptt") rule = std::make_unique<BpttRule>();
        else if (rule_kind == "eprop") {
          EpropConfig cfg;
          cfg.mode = broadcast_mode_from_string(mode);
          rule = std::make_unique<EpropRule>(cfg);
        } else if (rule_kind == "manhattan") {
          ManhattanConfig cfg;
          cfg.delta = delta;
          rule = std::make_unique<ManhattanRule>(cfg);
        } else {
          throw std::invalid_argument("unknown rule '" + rule_kind + "'");
        }
        OptimizerConfig oc;
        oc.kind = optimizer_kind_from_string(optimizer);
        oc.lr = lr;
        Optimizer opt(oc);
        EvaluatorConfig ev;
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.seed = seed;
        const auto history = train(*model, *rule, opt, data, ev, tc);
        py::list out;
        for (const EpochStats& s : history) {
          py::dict row;
          row["epoch"] = s.epoch;
          row["loss"] = s.loss;
          row["accuracy"] = s.accuracy;
          row["firing_rate"] = s.firing_rate;
          out.append(row);
        }
        return out;
      },
      py::arg("model"), py::arg("rule"), py::arg("x"), py::arg("labels"),
      py::arg("classes"), py::arg("epochs") = 5, py::arg("batch_size") = 32,
      py::arg("seed") = 0, py::arg("optimizer") = "adam", py::arg("lr") = 1e-3,
      py::arg("mode") = "symmetric", py::arg("delta") = 1e-3);

  m.def(
      "sample_and_predict",
      [](const std::shared_ptr<Model>& model, const py::array_t<double>& x,
         const std::vector<int>& labels, const py::array_t<double>& x_test,
         int steps, int burn_in, int thin, std::uint64_t seed, double sigma0,
         double target_accept, double prior_std, double temperature) {
        MalaConfig mc;
        mc.sigma0 = sigma0;
        mc.target_accept = target_accept;
        mc.prior_std = prior_std;
        mc.temperature = temperature;
        MalaRunConfig rc;
        rc.steps = steps;
        rc.burn_in = burn_in;
        rc.thin = thin;
        rc.seed = seed;
        LossConfig loss;
        ModelPosterior posterior(*model, Batch{to_tensor(x), labels}, loss, mc);
        const MalaRun run = run_mala(posterior, model->params(), mc, rc);
        const PosteriorPrediction pred =
            posterior_predict(run.samples, *model, to_tensor(x_test), loss);
        py::dict out;
        out["accept_rate"] = run.accept_rate;
        out["samples_kept"] = static_cast<int>(run.samples.size());
        out["mean_probs"] = to_array(pred.mean_probs);
        out["class_std"] = to_array(pred.class_std);
        out["entropy"] = to_array(pred.entropy);
        return out;
      },
      py::arg("model"), py::arg("x"), py::arg("labels"), py::arg("x_test"),
      py::arg("steps") = 500, py::arg("burn_in") = 200, py::arg("thin") = 1,
      py::arg("seed") = 0, py::arg("sigma0") = 0.01,
      py::arg("target_accept") = 0.574, py::arg("prior_std") = 1.0,
      py::arg("temperature") = 1.0);

  m.def("run_experiment", &run_experiment, py::arg("config_path"),
        py::arg("output_dir") = "",
        py::arg("seed") = py::none().cast<std::optional<std::uint64_t>>());

  m.def("validate_config", [](const std::string& path) {
    return validate_config_file(path).problems;
  });
}
