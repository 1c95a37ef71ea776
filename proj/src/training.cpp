#include "spikekit/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spikekit {

void OptimizerConfig::validate() const {
  if (kind != OptimizerKind::naive && lr < 0.0)
    throw std::invalid_argument("learning rate must be non-negative");
  if (kind == OptimizerKind::adam &&
      (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
       eps <= 0.0))
    throw std::invalid_argument("invalid adam hyperparameters");
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "naive") return OptimizerKind::naive;
  throw std::invalid_argument("unknown optimizer '" + s +
                              "' (valid: sgd, adam, naive)");
}

Tensor sgd_step(const Tensor& w, const Tensor& g, double lr) {
  require_same_shape(w, g, "sgd_step");
  Tensor out = w;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.data()[i] -= lr * g.data()[i];
  return out;
}

Tensor adam_step(const Tensor& w, const Tensor& g, AdamSlot& slot, int t,
                 const OptimizerConfig& cfg) {
  require_same_shape(w, g, "adam_step");
  if (slot.m.size() == 0) {
    slot.m = Tensor::zeros(w.shape());
    slot.v = Tensor::zeros(w.shape());
  }
  Tensor out = w;
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::int64_t i = 0; i < w.size(); ++i) {
    const double gi = g.data()[i];
    slot.m.data()[i] = cfg.beta1 * slot.m.data()[i] + (1.0 - cfg.beta1) * gi;
    slot.v.data()[i] = cfg.beta2 * slot.v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = slot.m.data()[i] / bc1;
    const double vhat = slot.v.data()[i] / bc2;
    out.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return out;
}

Tensor apply_naive(const Tensor& w, const Tensor& g) {
  require_same_shape(w, g, "apply_naive");
  return sub(w, g);
}

ParamMap apply_naive(const ParamMap& params, const GradientSet& grads) {
  ParamMap out = params;
  for (const auto& [id, g] : grads) {
    auto it = out.find(id);
    if (it == out.end())
      throw std::invalid_argument("apply_naive: no parameter named '" + id + "'");
    it->second = apply_naive(it->second, g);
  }
  return out;
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Optimizer::apply(Model& model, const GradientSet& grads) {
  ++t_;
  for (const auto& [id, g] : grads) {
    const Tensor& w = model.param(id);
    switch (cfg_.kind) {
      case OptimizerKind::naive:
        model.set_param(id, apply_naive(w, g));
        break;
      case OptimizerKind::sgd:
        model.set_param(id, sgd_step(w, g, cfg_.lr));
        break;
      case OptimizerKind::adam:
        model.set_param(id, adam_step(w, g, slots_[id], t_, cfg_));
        break;
    }
  }
  model.enforce_constraints();
}

EvalResult evaluate(const Model& model, const EvaluatorConfig& cfg,
                    const Batch& batch) {
  ForwardOutputs fw = model.forward(batch.inputs);
  EvalResult r;
  r.loss = loss_value(cfg.loss, fw.outputs_t, batch.labels);
  if (cfg.metric_accuracy) {
    const std::vector<int> pred =
        argmax_rows(predict_probs(cfg.loss, fw.outputs_t));
    int hits = 0;
    for (size_t i = 0; i < pred.size(); ++i)
      hits += pred[i] == batch.labels[i] ? 1 : 0;
    r.metrics["accuracy"] = pred.empty() ? 0.0
                                         : static_cast<double>(hits) /
                                               static_cast<double>(pred.size());
  }
  if (cfg.metric_firing_rate) {
    double rate = 0.0;
    if (!fw.states.empty()) {
      double spikes = 0.0;
      std::int64_t count = 0;
      for (const CellState& s : fw.states) {
        spikes += sum(s.z).item();
        count += s.z.size();
      }
      rate = count > 0 ? spikes / (static_cast<double>(count) * cfg.dt) : 0.0;
    }
    r.metrics["firing_rate"] = rate;
  }
  return r;
}

EvalResult evaluate_dataset(const Model& model, const EvaluatorConfig& cfg,
                            const Dataset& data) {
  const int n = data.size();
  const int chunk = std::max(1, cfg.chunk);
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  EvalResult total;
  double weight = 0.0;
  for (int from = 0; from < n; from += chunk) {
    const int to = std::min(n, from + chunk);
    const Batch b = take_batch(data, order, from, to);
    const EvalResult r = evaluate(model, cfg, b);
    const double w = static_cast<double>(to - from);
    total.loss += r.loss * w;
    for (const auto& [k, v] : r.metrics) total.metrics[k] += v * w;
    weight += w;
  }
  if (weight > 0.0) {
    total.loss /= weight;
    for (auto& [k, v] : total.metrics) v /= weight;
  }
  return total;
}

std::vector<EpochStats> train(
    Model& model, LearningRule& rule, Optimizer& opt, const Dataset& data,
    const EvaluatorConfig& ev, const TrainConfig& cfg,
    const Dataset* validation,
    const std::function<void(const EpochStats&)>& on_epoch) {
  if (!rule.supports(model))
    throw std::invalid_argument("rule '" + rule.name() +
                                "' does not support this model");
  data.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<EpochStats> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(data.size(), rng);
    const int n = data.size();
    int step = 0;
    for (int from = 0; from < n; from += cfg.batch_size, ++step) {
      const int to = std::min(n, from + cfg.batch_size);
      const Batch batch = take_batch(data, order, from, to);
      GradientSet grads;
      try {
        grads = rule.gradients(model, batch);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": " + e.what());
      }
      opt.apply(model, grads);
    }
    EpochStats stats;
    stats.epoch = epoch;
    const EvalResult r = evaluate_dataset(model, ev, data);
    if (!std::isfinite(r.loss))
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch) + ": non-finite loss");
    stats.loss = r.loss;
    stats.accuracy = r.metrics.count("accuracy") ? r.metrics.at("accuracy") : 0.0;
    stats.firing_rate =
        r.metrics.count("firing_rate") ? r.metrics.at("firing_rate") : 0.0;
    if (validation) {
      const EvalResult v = evaluate_dataset(model, ev, *validation);
      stats.val_loss = v.loss;
      stats.val_accuracy =
          v.metrics.count("accuracy") ? v.metrics.at("accuracy") : 0.0;
      stats.has_validation = true;
    }
    if (on_epoch) on_epoch(stats);
    history.push_back(stats);
  }
  return history;
}

namespace {

ParamMap params_delta(const ParamMap& after, const ParamMap& before) {
  ParamMap d = after;
  for (auto& [id, t] : d) t = sub(t, before.at(id));
  return d;
}

void flatten_into(const ParamMap& p, const std::string& only,
                  std::vector<double>& out) {
  out.clear();
  for (const auto& [id, t] : p) {
    if (!only.empty() && id != only) continue;
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
}

}  // namespace

DeviationStat deviation_between(const ParamMap& delta, const ParamMap& ref,
                                const std::string& param) {
  std::vector<double> a, b;
  flatten_into(delta, param, a);
  flatten_into(ref, param, b);
  if (a.size() != b.size())
    throw std::invalid_argument("deviation_between: mismatched parameter sets");
  double dot = 0.0, na = 0.0, nb = 0.0, diff2 = 0.0, bias = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
    const double d = a[i] - b[i];
    diff2 += d * d;
    bias += d;
  }
  DeviationStat s;
  if (na == 0.0 && nb == 0.0)
    s.cosine = 1.0;  // two silent updates agree
  else if (na == 0.0 || nb == 0.0)
    s.cosine = 0.0;
  else
    s.cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  s.rel_l2 = nb == 0.0 ? (diff2 == 0.0 ? 0.0 : std::sqrt(diff2))
                       : std::sqrt(diff2) / std::sqrt(nb);
  s.bias = a.empty() ? 0.0 : bias / static_cast<double>(a.size());
  return s;
}

double cosine_similarity_flat(const ParamMap& a, const ParamMap& b) {
  return deviation_between(a, b, "").cosine;
}

std::vector<ComparisonRecord> compare_gradients(
    Model& model, LearningRule& primary,
    const std::vector<LearningRule*>& others, const Dataset& data,
    Optimizer& primary_opt, const OptimizerConfig& clone_opt,
    const CompareConfig& cfg) {
  if (others.empty())
    throw std::invalid_argument("compare_gradients needs at least one other rule");
  if (!primary.supports(model))
    throw std::invalid_argument("rule '" + primary.name() +
                                "' does not support this model");
  for (LearningRule* r : others)
    if (!r->supports(model))
      throw std::invalid_argument("rule '" + r->name() +
                                  "' does not support this model");
  data.validate();

  // Unique record keys for duplicate rule names.
  std::vector<std::string> keys;
  {
    std::map<std::string, int> seen;
    seen[primary.name()] = 1;
    for (LearningRule* r : others) {
      std::string k = r->name();
      if (++seen[k] > 1) k += "#" + std::to_string(seen[k]);
      keys.push_back(k);
    }
  }

  struct CloneSlot {
    std::unique_ptr<Model> model;
    Optimizer opt;
  };
  std::vector<CloneSlot> clones;
  for (size_t i = 0; i < others.size(); ++i)
    clones.push_back({model.clone(), Optimizer(clone_opt)});

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order = shuffled_indices(data.size(), rng);
  int cursor = 0;

  std::vector<ComparisonRecord> records;
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + cfg.batch_size > data.size()) {
      order = shuffled_indices(data.size(), rng);
      cursor = 0;
    }
    const int take = std::min(cfg.batch_size, data.size());
    const Batch batch = take_batch(data, order, cursor, cursor + take);
    cursor += take;

    const ParamMap snapshot = model.params();
    ComparisonRecord rec;
    rec.step = step;

    for (size_t i = 0; i < others.size(); ++i) {
      Model& clone = *clones[i].model;
      clone.set_params(snapshot);
      // Sync must be exact; any drift would poison the deltas.
      for (const auto& [id, w] : snapshot)
        if (clone.param(id).values() != w.values())
          throw std::logic_error("clone sync drifted on '" + id + "'");
      const GradientSet g = others[i]->gradients(clone, batch);
      const ParamMap before = clone.params();
      clones[i].opt.apply(clone, g);
      rec.deltas[keys[i]] = params_delta(clone.params(), before);
    }

    const GradientSet gp = primary.gradients(model, batch);
    primary_opt.apply(model, gp);
    rec.deltas[primary.name()] = params_delta(model.params(), snapshot);

    const ParamMap& ref = rec.deltas[primary.name()];
    for (const auto& [key, delta] : rec.deltas) {
      auto& stat_map = rec.stats[key];
      stat_map["_all"] = deviation_between(delta, ref, "");
      for (const auto& [id, t] : delta)
        stat_map[id] = deviation_between(delta, ref, id);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace spikekit
