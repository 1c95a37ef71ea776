#include "spikekit/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <json.hpp>

#include "spikekit/encoding.hpp"
#include "spikekit/rules.hpp"
#include "spikekit/sampler.hpp"
#include "spikekit/training.hpp"

namespace spikekit {

const char* kOutputDirEnvVar = "SPIKEKIT_OUTPUT_DIR";

namespace {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << "\n";
    out_.flush();
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Config model

struct DatasetSpec {
  std::string kind = "two_sines";
  int n_train = 256;
  int n_test = 128;
  int steps = 50;
  double noise = 0.1;
  int dims = 2;
  int classes = 2;
  double blob_std = 0.3;
  std::string dir = "data";        // mnist IDX directory
  int train_subset = 10000;
  int test_subset = 2000;
  std::string sequence = "none";   // none | row_scan | threshold_crossing
  int sequence_steps = 28;
  std::string train_path, test_path;  // delimited files
  int delimited_steps = 0, delimited_dims = 0;
};

struct EncoderSpec {
  std::string kind = "none";
  double factor = 1.0;
  double threshold = 0.1;
  int window = 3;
  std::string rails = "two";
};

struct ModelSpec {
  std::string kind = "alif";
  int n_rec = 64;
  std::vector<int> hidden = {64, 32};
  std::string activation = "relu";
  double alpha = std::exp(-1.0 / 20.0);
  double rho = std::exp(-1.0 / 200.0);
  double kappa = std::exp(-1.0 / 20.0);
  double beta = 0.07;
  double v_th = 1.0;
  double gamma = 0.3;
};

struct RuleSpec {
  std::string kind = "bptt";
  std::string mode = "symmetric";  // eprop
  double delta = 1e-3;             // manhattan
  std::optional<double> g_min, g_max;
  std::uint64_t feedback_seed = 1;
};

struct TrainingSpec {
  int epochs = 10;
  int batch_size = 32;
  int steps = 20;  // compare mode
  std::string loss = "categorical_crossentropy";
  std::string readout = "mean";
  double reg_coef = 0.0;
  double reg_target_hz = 10.0;
  double dt = 1e-3;
};

struct OptimizerSpec {
  std::string kind = "adam";
  double lr = 1e-3;
};

struct SamplingSpec {
  int steps = 2000;
  int burn_in = 500;
  int thin = 1;
  double sigma0 = 0.01;
  double target_accept = 0.574;
  double adapt_rate = 0.02;
  double prior_std = 1.0;
  double temperature = 1.0;
};

struct ExperimentConfig {
  std::string mode = "train";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  ModelSpec model;
  DatasetSpec dataset;
  EncoderSpec encoder;
  std::vector<RuleSpec> rules;  // train/sample use rules[0]
  OptimizerSpec optimizer;
  TrainingSpec training;
  SamplingSpec sampling;
  json echo;  // raw config for the summary
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

RuleSpec parse_rule(const json& j) {
  RuleSpec r;
  r.kind = get_or<std::string>(j, "kind", "bptt");
  r.mode = get_or<std::string>(j, "mode", "symmetric");
  r.delta = get_or<double>(j, "delta", 1e-3);
  if (j.contains("g_min")) r.g_min = j.at("g_min").get<double>();
  if (j.contains("g_max")) r.g_max = j.at("g_max").get<double>();
  r.feedback_seed = get_or<std::uint64_t>(j, "feedback_seed", 1);
  return r;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  c.echo = j;
  c.mode = get_or<std::string>(j, "mode", "train");
  if (!j.contains("seed"))
    throw ConfigError("config requires an explicit 'seed'");
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = get_or<std::string>(j, "output_dir", "out");

  if (j.contains("model")) {
    const json& m = j.at("model");
    c.model.kind = get_or<std::string>(m, "kind", "alif");
    c.model.n_rec = get_or<int>(m, "n_rec", 64);
    c.model.hidden = get_or<std::vector<int>>(m, "hidden", {64, 32});
    c.model.activation = get_or<std::string>(m, "activation", "relu");
    c.model.alpha = get_or<double>(m, "alpha", c.model.alpha);
    c.model.rho = get_or<double>(m, "rho", c.model.rho);
    c.model.kappa = get_or<double>(m, "kappa", c.model.kappa);
    c.model.beta = get_or<double>(m, "beta", c.model.beta);
    c.model.v_th = get_or<double>(m, "v_th", c.model.v_th);
    c.model.gamma = get_or<double>(m, "gamma", c.model.gamma);
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.dataset.kind = get_or<std::string>(d, "kind", "two_sines");
    c.dataset.n_train = get_or<int>(d, "n_train", 256);
    c.dataset.n_test = get_or<int>(d, "n_test", 128);
    c.dataset.steps = get_or<int>(d, "steps", 50);
    c.dataset.noise = get_or<double>(d, "noise", 0.1);
    c.dataset.dims = get_or<int>(d, "dims", 2);
    c.dataset.classes = get_or<int>(d, "classes", 2);
    c.dataset.blob_std = get_or<double>(d, "blob_std", 0.3);
    c.dataset.dir = get_or<std::string>(d, "dir", "data");
    c.dataset.train_subset = get_or<int>(d, "train_subset", 10000);
    c.dataset.test_subset = get_or<int>(d, "test_subset", 2000);
    c.dataset.sequence = get_or<std::string>(d, "sequence", "none");
    c.dataset.sequence_steps = get_or<int>(d, "sequence_steps", 28);
    c.dataset.train_path = get_or<std::string>(d, "train_path", "");
    c.dataset.test_path = get_or<std::string>(d, "test_path", "");
    c.dataset.delimited_steps = get_or<int>(d, "delimited_steps", 0);
    c.dataset.delimited_dims = get_or<int>(d, "delimited_dims", 0);
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    c.encoder.kind = get_or<std::string>(e, "kind", "none");
    c.encoder.factor = get_or<double>(e, "factor", 1.0);
    c.encoder.threshold = get_or<double>(e, "threshold", 0.1);
    c.encoder.window = get_or<int>(e, "window", 3);
    c.encoder.rails = get_or<std::string>(e, "rails", "two");
  }
  if (j.contains("rule")) c.rules.push_back(parse_rule(j.at("rule")));
  if (j.contains("rules"))
    for (const json& r : j.at("rules")) c.rules.push_back(parse_rule(r));
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    c.optimizer.kind = get_or<std::string>(o, "kind", "adam");
    c.optimizer.lr = get_or<double>(o, "lr", 1e-3);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    c.training.epochs = get_or<int>(t, "epochs", 10);
    c.training.batch_size = get_or<int>(t, "batch_size", 32);
    c.training.steps = get_or<int>(t, "steps", 20);
    c.training.loss = get_or<std::string>(t, "loss", "categorical_crossentropy");
    c.training.readout = get_or<std::string>(t, "readout", "mean");
    c.training.dt = get_or<double>(t, "dt", 1e-3);
    if (t.contains("rate_reg")) {
      const json& r = t.at("rate_reg");
      c.training.reg_coef = get_or<double>(r, "coef", 0.0);
      c.training.reg_target_hz = get_or<double>(r, "target_hz", 10.0);
    }
  }
  if (j.contains("sampling")) {
    const json& s = j.at("sampling");
    c.sampling.steps = get_or<int>(s, "steps", 2000);
    c.sampling.burn_in = get_or<int>(s, "burn_in", 500);
    c.sampling.thin = get_or<int>(s, "thin", 1);
    c.sampling.sigma0 = get_or<double>(s, "sigma0", 0.01);
    c.sampling.target_accept = get_or<double>(s, "target_accept", 0.574);
    c.sampling.adapt_rate = get_or<double>(s, "adapt_rate", 0.02);
    c.sampling.prior_std = get_or<double>(s, "prior_std", 1.0);
    c.sampling.temperature = get_or<double>(s, "temperature", 1.0);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Validation

const std::vector<std::string> kModes = {"train", "compare", "sample", "encode"};
const std::vector<std::string> kRuleKinds = {"bptt", "eprop", "manhattan"};
const std::vector<std::string> kDatasetKinds = {
    "two_sines", "pattern_detect", "gaussian_blobs", "digits", "mnist",
    "delimited"};

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

bool dataset_is_flat(const ExperimentConfig& c) {
  if (c.dataset.kind == "gaussian_blobs") return true;
  if ((c.dataset.kind == "mnist" || c.dataset.kind == "digits") &&
      c.dataset.sequence == "none")
    return true;
  return false;
}

std::vector<std::string> check_config(const ExperimentConfig& c) {
  std::vector<std::string> problems;
  auto problem = [&](const std::string& field, const std::string& msg) {
    problems.push_back(field + ": " + msg);
  };

  if (!contains(kModes, c.mode))
    problem("mode", "unknown mode '" + c.mode + "' (valid: " + joined(kModes) + ")");
  if (!contains(kDatasetKinds, c.dataset.kind))
    problem("dataset.kind", "unknown dataset '" + c.dataset.kind +
                                "' (valid: " + joined(kDatasetKinds) + ")");
  if (c.model.kind != "lif" && c.model.kind != "alif" && c.model.kind != "mlp")
    problem("model.kind",
            "unknown model '" + c.model.kind + "' (valid: lif, alif, mlp)");
  for (const RuleSpec& r : c.rules) {
    if (!contains(kRuleKinds, r.kind)) {
      problem("rule.kind", "unknown rule '" + r.kind +
                               "' (valid: " + joined(kRuleKinds) + ")");
      continue;
    }
    if (r.kind == "eprop") {
      try {
        broadcast_mode_from_string(r.mode);
      } catch (const std::exception& e) {
        problem("rule.mode", e.what());
      }
      if (c.model.kind == "mlp")
        problem("rule.kind",
                "e-prop requires a recurrent spiking model, not mlp");
    }
    if (r.kind == "manhattan") {
      if (r.delta <= 0.0) problem("rule.delta", "must be positive");
      if (r.g_min.has_value() != r.g_max.has_value())
        problem("rule.g_min", "conductance bounds need both g_min and g_max");
      if (r.g_min && r.g_max && *r.g_min >= *r.g_max)
        problem("rule.g_min", "bounds must satisfy g_min < g_max");
      if (c.optimizer.kind != "naive")
        problem("optimizer.kind",
                "manhattan applies its own step size; use the naive optimizer");
    }
  }
  if (c.mode == "train" && c.rules.empty())
    problem("rule", "train mode needs a 'rule' section");
  if (c.mode == "compare" && c.rules.size() < 2)
    problem("rules", "compare mode needs at least two rules (primary first)");

  try {
    optimizer_kind_from_string(c.optimizer.kind);
  } catch (const std::exception& e) {
    problem("optimizer.kind", e.what());
  }
  if (c.optimizer.kind != "naive" && c.optimizer.lr < 0.0)
    problem("optimizer.lr", "must be non-negative");
  try {
    loss_kind_from_string(c.training.loss);
  } catch (const std::exception& e) {
    problem("training.loss", e.what());
  }
  try {
    readout_mode_from_string(c.training.readout);
  } catch (const std::exception& e) {
    problem("training.readout", e.what());
  }
  if (c.training.dt <= 0.0) problem("training.dt", "must be positive");

  if (c.encoder.kind != "none") {
    try {
      encoder_kind_from_string(c.encoder.kind);
      EncoderConfig enc;
      enc.kind = encoder_kind_from_string(c.encoder.kind);
      enc.factor = c.encoder.factor;
      enc.threshold = c.encoder.threshold;
      enc.window = c.encoder.window;
      enc.validate();
      rail_mode_from_string(c.encoder.rails);
    } catch (const std::exception& e) {
      problem("encoder", e.what());
    }
    if (dataset_is_flat(c))
      problem("encoder.kind", "spike encoders need sequence inputs; dataset '" +
                                  c.dataset.kind + "' is flat here");
  }
  if (c.mode == "encode" && c.encoder.kind == "none")
    problem("encoder.kind", "encode mode needs an encoder (tc, sf or mw)");

  const bool spiking_model = c.model.kind == "lif" || c.model.kind == "alif";
  if (c.mode != "encode") {
    if (spiking_model && dataset_is_flat(c))
      problem("model.kind",
              "spiking models need sequence inputs; set dataset.sequence or "
              "pick a sequence dataset");
    if (!spiking_model && !dataset_is_flat(c))
      problem("model.kind", "mlp expects flat inputs, got a sequence dataset");
  }
  if (c.model.kind == "alif" || c.model.kind == "lif") {
    if (c.model.alpha <= 0.0 || c.model.alpha >= 1.0)
      problem("model.alpha", "must lie in (0,1)");
    if (c.model.kappa < 0.0 || c.model.kappa >= 1.0)
      problem("model.kappa", "must lie in [0,1)");
    if (c.model.v_th <= 0.0) problem("model.v_th", "must be positive");
    if (c.model.kind == "alif") {
      if (c.model.rho <= 0.0 || c.model.rho >= 1.0)
        problem("model.rho", "must lie in (0,1)");
      if (c.model.beta < 0.0) problem("model.beta", "must be >= 0");
    }
  }
  if (c.dataset.kind == "delimited") {
    if (c.dataset.train_path.empty())
      problem("dataset.train_path", "delimited datasets need a train_path");
    if (c.dataset.delimited_steps < 1 || c.dataset.delimited_dims < 1)
      problem("dataset.delimited_steps",
              "delimited datasets need delimited_steps and delimited_dims");
  }
  if (c.mode == "sample") {
    if (c.sampling.sigma0 <= 0.0) problem("sampling.sigma0", "must be positive");
    if (c.sampling.target_accept <= 0.0 || c.sampling.target_accept >= 1.0)
      problem("sampling.target_accept", "must lie in (0,1)");
    if (c.sampling.steps < 1) problem("sampling.steps", "must be >= 1");
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Assembly

struct BuiltData {
  Dataset train, test;
};

BuiltData build_datasets(const ExperimentConfig& c) {
  const DatasetSpec& d = c.dataset;
  BuiltData out;
  if (d.kind == "two_sines" || d.kind == "pattern_detect" ||
      d.kind == "gaussian_blobs") {
    SyntheticConfig sc;
    sc.steps = d.steps;
    sc.noise = d.noise;
    sc.dims = d.dims;
    sc.classes = d.classes;
    sc.blob_std = d.blob_std;
    sc.n = d.n_train;
    out.train = synthetic_task(d.kind, c.seed * 2654435761ULL + 1, sc);
    sc.n = d.n_test;
    out.test = synthetic_task(d.kind, c.seed * 2654435761ULL + 2, sc);
  } else if (d.kind == "digits") {
    out.train = synthetic_digits(d.n_train, c.seed * 2654435761ULL + 1);
    out.test = synthetic_digits(d.n_test, c.seed * 2654435761ULL + 2);
  } else if (d.kind == "mnist") {
    namespace fs = std::filesystem;
    const fs::path dir(d.dir);
    out.train = load_idx((dir / "train-images-idx3-ubyte").string(),
                         (dir / "train-labels-idx1-ubyte").string());
    out.test = load_idx((dir / "t10k-images-idx3-ubyte").string(),
                        (dir / "t10k-labels-idx1-ubyte").string());
    out.train = subset(out.train, d.train_subset);
    out.test = subset(out.test, d.test_subset);
  } else if (d.kind == "delimited") {
    out.train = load_delimited_sequences(d.train_path, d.delimited_steps,
                                         d.delimited_dims);
    out.test = d.test_path.empty()
                   ? out.train
                   : load_delimited_sequences(d.test_path, d.delimited_steps,
                                              d.delimited_dims);
  } else {
    throw ConfigError("unknown dataset kind '" + d.kind + "'");
  }

  if (d.sequence != "none") {
    const SequenceMode mode = d.sequence == "row_scan"
                                  ? SequenceMode::row_scan
                                  : SequenceMode::threshold_crossing;
    out.train = image_to_sequence(out.train, mode, d.sequence_steps);
    out.test = image_to_sequence(out.test, mode, d.sequence_steps);
  }

  if (c.encoder.kind != "none" && c.mode != "encode") {
    EncoderConfig enc;
    enc.kind = encoder_kind_from_string(c.encoder.kind);
    enc.factor = c.encoder.factor;
    enc.threshold = c.encoder.threshold;
    enc.window = c.encoder.window;
    const RailMode rails = rail_mode_from_string(c.encoder.rails);
    out.train = encode_dataset(out.train, enc, rails);
    out.test = encode_dataset(out.test, enc, rails);
  }
  return out;
}

std::unique_ptr<Model> build_model(const ExperimentConfig& c,
                                   const Dataset& train) {
  if (c.model.kind == "mlp") {
    MlpConfig mc;
    mc.dims.push_back(train.inputs.dim(1));
    for (int h : c.model.hidden) mc.dims.push_back(h);
    mc.dims.push_back(train.class_count);
    mc.hidden_act = activation_from_string(c.model.activation);
    return std::make_unique<MlpModel>(mc, c.seed);
  }
  SpikingNetConfig sc;
  sc.kind = c.model.kind == "lif" ? CellKind::lif : CellKind::alif;
  sc.n_in = train.inputs.dim(2);
  sc.n_rec = c.model.n_rec;
  sc.n_out = train.class_count;
  sc.alpha = c.model.alpha;
  sc.rho = c.model.rho;
  sc.kappa = c.model.kappa;
  sc.beta = c.model.beta;
  sc.v_th = c.model.v_th;
  sc.gamma = c.model.gamma;
  return std::make_unique<RecurrentSpikingModel>(sc, c.seed);
}

std::unique_ptr<LearningRule> build_rule(const RuleSpec& spec,
                                         const ExperimentConfig& c) {
  LossConfig loss;
  loss.kind = loss_kind_from_string(c.training.loss);
  loss.readout = readout_mode_from_string(c.training.readout);
  RateRegConfig reg;
  reg.coef = c.training.reg_coef;
  reg.target_hz = c.training.reg_target_hz;
  reg.dt = c.training.dt;

  if (spec.kind == "bptt") return std::make_unique<BpttRule>(BpttConfig{loss, reg});
  if (spec.kind == "eprop") {
    EpropConfig ec;
    ec.mode = broadcast_mode_from_string(spec.mode);
    ec.loss = loss;
    ec.reg = reg;
    ec.feedback_seed = spec.feedback_seed;
    return std::make_unique<EpropRule>(ec);
  }
  if (spec.kind == "manhattan") {
    ManhattanConfig mc;
    mc.delta = spec.delta;
    mc.g_min = spec.g_min;
    mc.g_max = spec.g_max;
    return std::make_unique<ManhattanRule>(mc, BpttConfig{loss, reg});
  }
  throw ConfigError("unknown rule kind '" + spec.kind + "'");
}

EvaluatorConfig build_evaluator(const ExperimentConfig& c) {
  EvaluatorConfig ev;
  ev.loss.kind = loss_kind_from_string(c.training.loss);
  ev.loss.readout = readout_mode_from_string(c.training.readout);
  ev.dt = c.training.dt;
  return ev;
}

// ---------------------------------------------------------------------------
// Modes

void run_train(const ExperimentConfig& c, const std::filesystem::path& out_dir,
               json& summary) {
  BuiltData data = build_datasets(c);
  std::unique_ptr<Model> model = build_model(c, data.train);
  std::unique_ptr<LearningRule> rule = build_rule(c.rules.at(0), c);
  OptimizerConfig oc;
  oc.kind = optimizer_kind_from_string(c.optimizer.kind);
  oc.lr = c.optimizer.lr;
  Optimizer opt(oc);
  EvaluatorConfig ev = build_evaluator(c);
  TrainConfig tc;
  tc.epochs = c.training.epochs;
  tc.batch_size = c.training.batch_size;
  tc.seed = c.seed;

  CsvWriter history(out_dir / "history.csv", "epoch,loss,accuracy,firing_rate");
  std::vector<EpochStats> stats = train(
      *model, *rule, opt, data.train, ev, tc, &data.test,
      [&](const EpochStats& s) {
        history.row({std::to_string(s.epoch), fmt_g(s.loss), fmt_g(s.accuracy),
                     fmt_g(s.firing_rate)});
      });

  const EvalResult test = evaluate_dataset(*model, ev, data.test);
  summary["final"] = {
      {"train_loss", stats.empty() ? 0.0 : stats.back().loss},
      {"train_accuracy", stats.empty() ? 0.0 : stats.back().accuracy},
      {"firing_rate_hz", stats.empty() ? 0.0 : stats.back().firing_rate},
      {"test_loss", test.loss},
      {"test_accuracy",
       test.metrics.count("accuracy") ? test.metrics.at("accuracy") : 0.0},
  };
}

void run_compare(const ExperimentConfig& c,
                 const std::filesystem::path& out_dir, json& summary) {
  BuiltData data = build_datasets(c);
  std::unique_ptr<Model> model = build_model(c, data.train);
  std::unique_ptr<LearningRule> primary = build_rule(c.rules.at(0), c);
  std::vector<std::unique_ptr<LearningRule>> others;
  for (size_t i = 1; i < c.rules.size(); ++i)
    others.push_back(build_rule(c.rules[i], c));
  std::vector<LearningRule*> other_ptrs;
  for (auto& r : others) other_ptrs.push_back(r.get());

  OptimizerConfig oc;
  oc.kind = optimizer_kind_from_string(c.optimizer.kind);
  oc.lr = c.optimizer.lr;
  Optimizer primary_opt(oc);
  CompareConfig cc;
  cc.steps = c.training.steps;
  cc.batch_size = c.training.batch_size;
  cc.seed = c.seed;

  const std::vector<ComparisonRecord> records = compare_gradients(
      *model, *primary, other_ptrs, data.train, primary_opt, oc, cc);

  CsvWriter csv(out_dir / "comparison.csv", "step,rule,param,cosine,rel_l2,bias");
  std::map<std::string, std::vector<double>> cosines_all;
  for (const ComparisonRecord& rec : records)
    for (const auto& [rule_key, stat_map] : rec.stats)
      for (const auto& [param, st] : stat_map) {
        csv.row({std::to_string(rec.step), rule_key, param, fmt_g(st.cosine),
                 fmt_g(st.rel_l2), fmt_g(st.bias)});
        if (param == "_all") cosines_all[rule_key].push_back(st.cosine);
      }

  json medians;
  for (const auto& [rule_key, cs] : cosines_all)
    medians[rule_key] = median(cs);
  summary["final"] = {{"steps", static_cast<int>(records.size())},
                      {"median_cosine_to_reference", medians}};
}

void run_sample(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                json& summary) {
  BuiltData data = build_datasets(c);
  std::unique_ptr<Model> model = build_model(c, data.train);
  LossConfig loss;
  loss.kind = loss_kind_from_string(c.training.loss);
  loss.readout = readout_mode_from_string(c.training.readout);

  MalaConfig mc;
  mc.sigma0 = c.sampling.sigma0;
  mc.target_accept = c.sampling.target_accept;
  mc.adapt_rate = c.sampling.adapt_rate;
  mc.prior_std = c.sampling.prior_std;
  mc.temperature = c.sampling.temperature;
  MalaRunConfig rc;
  rc.steps = c.sampling.steps;
  rc.burn_in = c.sampling.burn_in;
  rc.thin = c.sampling.thin;
  rc.seed = c.seed;

  ModelPosterior posterior(*model, full_batch(data.train), loss, mc);
  const MalaRun run = run_mala(posterior, model->params(), mc, rc);

  CsvWriter samples_csv(out_dir / "samples.csv", "step,log_post,accepted");
  for (const ChainEntry& e : run.chain)
    samples_csv.row({std::to_string(e.step), fmt_g(e.log_post),
                     e.accepted ? "1" : "0"});

  const PosteriorPrediction pred =
      posterior_predict(run.samples, *model, data.test.inputs, loss);
  const std::vector<int> hard = argmax_rows(pred.mean_probs);

  CsvWriter unc_csv(out_dir / "uncertainty.csv", "example_id,correct,entropy,std");
  std::vector<double> h_correct, h_wrong;
  for (int i = 0; i < pred.mean_probs.dim(0); ++i) {
    const bool correct = hard[static_cast<size_t>(i)] ==
                         data.test.labels[static_cast<size_t>(i)];
    double mean_std = 0.0;
    for (int k = 0; k < pred.class_std.dim(1); ++k)
      mean_std += pred.class_std(i, k);
    mean_std /= pred.class_std.dim(1);
    unc_csv.row({std::to_string(i), correct ? "1" : "0",
                 fmt_g(pred.entropy(i)), fmt_g(mean_std)});
    (correct ? h_correct : h_wrong).push_back(pred.entropy(i));
  }

  summary["final"] = {
      {"samples_kept", static_cast<int>(run.samples.size())},
      {"accept_rate", run.accept_rate},
      {"final_sigma", run.final_sigma},
      {"test_accuracy",
       h_correct.size() /
           static_cast<double>(std::max<size_t>(
               1, h_correct.size() + h_wrong.size()))},
      {"median_entropy_correct", median(h_correct)},
      {"median_entropy_incorrect", median(h_wrong)},
      {"n_correct", static_cast<int>(h_correct.size())},
      {"n_incorrect", static_cast<int>(h_wrong.size())},
  };
}

void run_encode(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                json& summary) {
  BuiltData data = build_datasets(c);
  if (!data.train.sequential())
    throw ConfigError("encode mode needs a sequence dataset");
  EncoderConfig enc;
  enc.kind = encoder_kind_from_string(c.encoder.kind);
  enc.factor = c.encoder.factor;
  enc.threshold = c.encoder.threshold;
  enc.window = c.encoder.window;
  const Dataset encoded =
      encode_dataset(data.train, enc, RailMode::signed_rail);

  CsvWriter csv(out_dir / "encoded.csv", "example_id,channel,t,spike");
  const int n = encoded.size(), steps = encoded.inputs.dim(1),
            dims = encoded.inputs.dim(2);
  double nonzero = 0.0, naive_nonzero = 0.0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < dims; ++ch)
      for (int t = 0; t < steps; ++t) {
        const double v = encoded.inputs(i, t, ch);
        csv.row({std::to_string(i), std::to_string(ch), std::to_string(t),
                 fmt_g(v)});
        if (v != 0.0) nonzero += 1.0;
        if (t > 0 &&
            data.train.inputs(i, t, ch) != data.train.inputs(i, t - 1, ch))
          naive_nonzero += 1.0;
      }
  const double cells = static_cast<double>(n) * steps * dims;
  summary["final"] = {
      {"sparsity", nonzero / cells},
      {"naive_delta_density", naive_nonzero / cells},
  };
}

}  // namespace

ValidationReport validate_config_file(const std::string& config_path) {
  ValidationReport report;
  std::ifstream in(config_path);
  if (!in) {
    report.problems.push_back("config: cannot open " + config_path);
    return report;
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    report.problems.push_back(std::string("config: parse error: ") + e.what());
    return report;
  }
  try {
    const ExperimentConfig c = parse_config(j);
    report.problems = check_config(c);
  } catch (const std::exception& e) {
    report.problems.push_back(std::string("config: ") + e.what());
  }
  return report;
}

int run_experiment(const std::string& config_path,
                   const std::string& output_dir_override,
                   std::optional<std::uint64_t> seed_override) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "config: cannot open " << config_path << "\n";
    return 1;
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    std::cerr << "config: parse error: " << e.what() << "\n";
    return 1;
  }

  ExperimentConfig c;
  try {
    c = parse_config(j);
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 1;
  }
  if (seed_override) {
    c.seed = *seed_override;
    c.echo["seed"] = *seed_override;
  }
  const std::vector<std::string> problems = check_config(c);
  if (!problems.empty()) {
    for (const std::string& p : problems) std::cerr << p << "\n";
    return 1;
  }

  std::string out_dir_str = c.output_dir;
  if (const char* env = std::getenv(kOutputDirEnvVar); env && *env)
    out_dir_str = env;
  if (!output_dir_override.empty()) out_dir_str = output_dir_override;

  const std::filesystem::path out_dir(out_dir_str);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  json summary;
  summary["mode"] = c.mode;
  summary["seed"] = c.seed;
  summary["config"] = c.echo;
  try {
    if (c.mode == "train") run_train(c, out_dir, summary);
    else if (c.mode == "compare") run_compare(c, out_dir, summary);
    else if (c.mode == "sample") run_sample(c, out_dir, summary);
    else run_encode(c, out_dir, summary);
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    summary["error"] = e.what();
    std::ofstream s(out_dir / "summary.json");
    s << summary.dump(2) << "\n";
    return 2;
  }

  std::ofstream s(out_dir / "summary.json");
  s << summary.dump(2) << "\n";
  return 0;
}

}  // namespace spikekit
