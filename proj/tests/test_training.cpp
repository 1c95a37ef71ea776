#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "spikekit/training.hpp"

using namespace spikekit;
using spikekit::testing::max_abs_diff;

namespace {

Dataset blobs(int n, std::uint64_t seed, double spread = 0.25) {
  SyntheticConfig cfg;
  cfg.n = n;
  cfg.dims = 2;
  cfg.classes = 2;
  cfg.blob_std = spread;
  return synthetic_task("gaussian_blobs", seed, cfg);
}

}  // namespace

TEST_CASE("evaluate computes loss and metrics") {
  MlpConfig mcfg;
  mcfg.dims = {2, 3};
  MlpModel model(mcfg, 1);
  EvaluatorConfig ev;

  SUBCASE("confident correct predictions: accuracy 1, crossentropy near 0") {
    model.set_param("layer0.w", Tensor::zeros({2, 3}));
    Batch batch;
    batch.inputs = Tensor::zeros({2, 2});
    batch.labels = {1, 1};
    model.set_param("layer0.b", Tensor::from_row({-40.0, 40.0, -40.0}));
    EvalResult r = evaluate(model, ev, batch);
    CHECK(r.metrics.at("accuracy") == 1.0);
    CHECK(r.loss < 1e-12);
  }
  SUBCASE("uniform predictions cost log C") {
    model.set_param("layer0.w", Tensor::zeros({2, 3}));
    model.set_param("layer0.b", Tensor::zeros({3}));
    Batch batch;
    batch.inputs = Tensor::zeros({4, 2});
    batch.labels = {0, 1, 2, 0};
    EvalResult r = evaluate(model, ev, batch);
    CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SUBCASE("a non-spiking model reports zero firing rate") {
    Batch batch;
    batch.inputs = Tensor::zeros({1, 2});
    batch.labels = {0};
    EvalResult r = evaluate(model, ev, batch);
    CHECK(r.metrics.at("firing_rate") == 0.0);
  }
  SUBCASE("out-of-range labels are rejected") {
    Batch batch;
    batch.inputs = Tensor::zeros({1, 2});
    batch.labels = {7};
    CHECK_THROWS_AS((void)evaluate(model, ev, batch), std::invalid_argument);
  }
}

TEST_CASE("optimizer steps") {
  SUBCASE("adam's first step has magnitude lr regardless of gradient scale") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.lr = 0.01;
    for (double scale : {1e-4, 1.0, 1e4}) {
      AdamSlot slot;
      Tensor w = Tensor::from_row({0.0, 0.0});
      Tensor g = Tensor::from_row({scale, -scale});
      Tensor next = adam_step(w, g, slot, 1, cfg);
      CHECK(std::abs(next(0) + cfg.lr) < 1e-6);
      CHECK(std::abs(next(1) - cfg.lr) < 1e-6);
    }
  }
  SUBCASE("sgd with lr=1 equals the naive optimizer") {
    std::mt19937_64 rng(2);
    Tensor w = Tensor::randn({4}, rng);
    Tensor g = Tensor::randn({4}, rng);
    CHECK(max_abs_diff(sgd_step(w, g, 1.0), apply_naive(w, g)) == 0.0);
  }
  SUBCASE("zero gradients leave adam parameters unchanged") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    AdamSlot slot;
    Tensor w = Tensor::from_row({0.5, -0.5});
    Tensor next = adam_step(w, Tensor::zeros({2}), slot, 1, cfg);
    CHECK(max_abs_diff(next, w) == 0.0);
  }
  SUBCASE("negative learning rates are rejected") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.lr = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("apply_naive") {
  SUBCASE("zero gradient leaves weights unchanged") {
    ParamMap p{{"w", Tensor::from_row({1.0})}};
    GradientSet g{{"w", Tensor::zeros({1})}};
    CHECK(apply_naive(p, g)["w"](0) == 1.0);
  }
  SUBCASE("subtracts the raw gradient") {
    CHECK(apply_naive(Tensor::from_row({1.0}),
                      Tensor::from_row({0.25}))(0) == doctest::Approx(0.75));
  }
  SUBCASE("two applications are additive") {
    Tensor w = Tensor::from_row({1.0});
    Tensor g = Tensor::from_row({0.25});
    CHECK(apply_naive(apply_naive(w, g), g)(0) == doctest::Approx(0.5));
  }
}

TEST_CASE("training loop") {
  SUBCASE("lr=0 keeps parameters and loss flat") {
    Dataset data = blobs(64, 3);
    MlpConfig mcfg;
    mcfg.dims = {2, 8, 2};
    MlpModel model(mcfg, 4);
    const ParamMap before = model.params();
    BpttRule rule;
    Optimizer opt({OptimizerKind::sgd, 0.0});
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    const auto history = train(model, rule, opt, data, EvaluatorConfig{}, tc);
    CHECK(history.size() == 3);
    for (const auto& [id, w] : before)
      CHECK(max_abs_diff(model.param(id), w) == 0.0);
    CHECK(history[0].loss == history[2].loss);
  }
  SUBCASE("separable blobs reach 95 percent within 20 epochs") {
    Dataset data = blobs(128, 5);
    MlpConfig mcfg;
    mcfg.dims = {2, 16, 2};
    MlpModel model(mcfg, 6);
    BpttRule rule;
    Optimizer opt({OptimizerKind::adam, 1e-2});
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 16;
    tc.seed = 7;
    const auto history = train(model, rule, opt, data, EvaluatorConfig{}, tc);
    CHECK(history.back().accuracy >= 0.95);
    for (const auto& e : history) CHECK(std::isfinite(e.loss));
  }
  SUBCASE("two-sines with zero noise trains to full accuracy") {
    SyntheticConfig scfg;
    scfg.n = 64;
    scfg.steps = 30;
    scfg.noise = 0.0;
    Dataset data = synthetic_task("two_sines", 11, scfg);
    SpikingNetConfig ncfg;
    ncfg.kind = CellKind::lif;
    ncfg.n_in = 1;
    ncfg.n_rec = 24;
    ncfg.n_out = 2;
    RecurrentSpikingModel model(ncfg, 12);
    BpttRule rule;
    Optimizer opt({OptimizerKind::adam, 1e-2});
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 16;
    tc.seed = 13;
    const auto history = train(model, rule, opt, data, EvaluatorConfig{}, tc);
    CHECK(history.back().accuracy == 1.0);
  }
  SUBCASE("the same seed reproduces the history exactly") {
    Dataset data = blobs(48, 8);
    auto run_once = [&] {
      MlpConfig mcfg;
      mcfg.dims = {2, 6, 2};
      MlpModel model(mcfg, 9);
      BpttRule rule;
      Optimizer opt({OptimizerKind::adam, 1e-3});
      TrainConfig tc;
      tc.epochs = 4;
      tc.batch_size = 12;
      tc.seed = 10;
      return train(model, rule, opt, data, EvaluatorConfig{}, tc);
    };
    const auto h1 = run_once(), h2 = run_once();
    REQUIRE(h1.size() == h2.size());
    for (size_t i = 0; i < h1.size(); ++i) {
      CHECK(h1[i].loss == h2[i].loss);
      CHECK(h1[i].accuracy == h2[i].accuracy);
    }
  }
  SUBCASE("divergence aborts with a diagnostic naming the epoch") {
    Dataset data = blobs(32, 14);
    MlpConfig mcfg;
    mcfg.dims = {2, 4, 2};
    MlpModel model(mcfg, 15);
    BpttConfig bc;
    bc.loss.kind = LossKind::mse;
    BpttRule rule(bc);
    Optimizer opt({OptimizerKind::sgd, 1e18});
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 8;
    try {
      (void)train(model, rule, opt, data, EvaluatorConfig{}, tc);
      FAIL("expected divergence");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("diverged at epoch") != std::string::npos);
    }
  }
}

TEST_CASE("gradient comparison harness") {
  SpikingNetConfig ncfg;
  ncfg.kind = CellKind::alif;
  ncfg.n_in = 1;
  ncfg.n_rec = 8;
  ncfg.n_out = 2;
  SyntheticConfig scfg;
  scfg.n = 48;
  scfg.steps = 12;
  Dataset data = synthetic_task("two_sines", 20, scfg);

  SUBCASE("a rule compared against itself shows zero deviation") {
    RecurrentSpikingModel model(ncfg, 21);
    BpttRule primary, duplicate;
    Optimizer opt({OptimizerKind::naive});
    CompareConfig cc;
    cc.steps = 3;
    cc.batch_size = 16;
    const auto records = compare_gradients(model, primary, {&duplicate}, data,
                                           opt, {OptimizerKind::naive}, cc);
    REQUIRE(records.size() == 3);
    for (const auto& rec : records)
      for (const auto& [param, st] : rec.stats.at("bptt#2")) {
        CHECK(st.cosine == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(st.rel_l2 == doctest::Approx(0.0));
        CHECK(st.bias == doctest::Approx(0.0));
      }
  }
  SUBCASE("costs exactly one evaluation per rule per step") {
    RecurrentSpikingModel model(ncfg, 22);
    BpttRule primary;
    EpropRule sym, rnd{EpropConfig{BroadcastMode::random, {}, {}, 2}};
    Optimizer opt({OptimizerKind::naive});
    CompareConfig cc;
    cc.steps = 4;
    cc.batch_size = 16;
    (void)compare_gradients(model, primary, {&sym, &rnd}, data, opt,
                            {OptimizerKind::naive}, cc);
    CHECK(primary.eval_count() == 4);
    CHECK(sym.eval_count() == 4);
    CHECK(rnd.eval_count() == 4);
  }
  SUBCASE("with the naive optimizer the delta is exactly minus the gradient") {
    RecurrentSpikingModel model(ncfg, 23);
    const ParamMap snapshot = model.params();
    BpttRule primary;
    EpropRule sym;
    Optimizer opt({OptimizerKind::naive});
    CompareConfig cc;
    cc.steps = 1;
    cc.batch_size = data.size();
    cc.seed = 24;
    const auto records = compare_gradients(model, primary, {&sym}, data, opt,
                                           {OptimizerKind::naive}, cc);
    // Recompute each rule's gradients on the synced snapshot and batch.
    std::mt19937_64 rng(cc.seed);
    const std::vector<int> order = shuffled_indices(data.size(), rng);
    const Batch batch = take_batch(data, order, 0, data.size());
    RecurrentSpikingModel probe(ncfg, 23);
    probe.set_params(snapshot);
    BpttRule probe_bptt;
    const GradientSet gb = probe_bptt.gradients(probe, batch);
    // (w - g) - w rounds at the last ulp; "exactly" means no lr scaling.
    for (const auto& [id, g] : gb)
      CHECK(max_abs_diff(records[0].deltas.at("bptt").at(id), neg(g)) <
            1e-15 * (1.0 + max_abs(g)));
  }
  SUBCASE("flattened cosine matches a brute-force recomputation") {
    RecurrentSpikingModel model(ncfg, 25);
    BpttRule primary;
    EpropRule sym;
    Optimizer opt({OptimizerKind::naive});
    CompareConfig cc;
    cc.steps = 2;
    cc.batch_size = 16;
    const auto records = compare_gradients(model, primary, {&sym}, data, opt,
                                           {OptimizerKind::naive}, cc);
    for (const auto& rec : records) {
      std::vector<double> a, b;
      for (const auto& [id, t] : rec.deltas.at("eprop_symmetric"))
        a.insert(a.end(), t.values().begin(), t.values().end());
      for (const auto& [id, t] : rec.deltas.at("bptt"))
        b.insert(b.end(), t.values().begin(), t.values().end());
      double dot = 0, na = 0, nb = 0;
      for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      const double want = dot / (std::sqrt(na) * std::sqrt(nb));
      CHECK(rec.stats.at("eprop_symmetric").at("_all").cosine ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("needs at least one other rule") {
    RecurrentSpikingModel model(ncfg, 26);
    BpttRule primary;
    Optimizer opt({OptimizerKind::naive});
    CHECK_THROWS_AS((void)compare_gradients(model, primary, {}, data, opt,
                                            {OptimizerKind::naive}, {}),
                    std::invalid_argument);
  }
}
