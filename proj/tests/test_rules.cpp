#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "spikekit/rules.hpp"
#include "spikekit/training.hpp"

using namespace spikekit;
using spikekit::testing::max_abs_diff;
using spikekit::testing::rel_l2_error;

namespace {

RecurrentSpikingModel small_net(CellKind kind, int n_in, int n_rec, int n_out,
                                std::uint64_t seed, double gamma = 0.3) {
  SpikingNetConfig cfg;
  cfg.kind = kind;
  cfg.n_in = n_in;
  cfg.n_rec = n_rec;
  cfg.n_out = n_out;
  cfg.gamma = gamma;
  return RecurrentSpikingModel(cfg, seed);
}

Batch random_batch(int b, int steps, int d, int classes, std::uint64_t seed,
                   double scale = 1.5) {
  std::mt19937_64 rng(seed);
  Batch batch;
  batch.inputs = Tensor::randn({b, steps, d}, rng, scale);
  std::uniform_int_distribution<int> lab(0, classes - 1);
  for (int i = 0; i < b; ++i) batch.labels.push_back(lab(rng));
  return batch;
}

}  // namespace

TEST_CASE("trace step reductions and edge cases") {
  std::mt19937_64 rng(1);
  const Tensor pre = Tensor::randn({3}, rng);
  const Tensor psi = Tensor::randn({2}, rng, 0.1);

  SUBCASE("beta zero gives e = psi * eps_v'") {
    TraceState tr = TraceState::zeros(3, 2);
    Tensor e;
    tr = eprop_trace_step(0.9, 0.5, 0.0, 0.3, pre, psi, tr, &e);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        CHECK(e(i, j) == doctest::Approx(psi(j) * pre(i)).epsilon(1e-12));
        CHECK(tr.eps_a(i, j) == 0.0);
      }
  }
  SUBCASE("zero presynaptic activity keeps all traces at zero") {
    TraceState tr = TraceState::zeros(3, 2);
    for (int t = 0; t < 7; ++t)
      tr = eprop_trace_step(0.9, 0.5, 0.1, 0.3, Tensor::zeros({3}), psi, tr);
    CHECK(max_abs(tr.eps_v) == 0.0);
    CHECK(max_abs(tr.eps_a) == 0.0);
    CHECK(max_abs(tr.filtered) == 0.0);
  }
  SUBCASE("shape mismatch is rejected") {
    TraceState tr = TraceState::zeros(4, 2);
    CHECK_THROWS_AS(
        (void)eprop_trace_step(0.9, 0.5, 0.1, 0.3, pre, psi, tr),
        std::invalid_argument);
  }
}

TEST_CASE("recursive traces equal the brute-force unrolled definition") {
  // Oracle: for each step u <= t,
  //   eps_v[t] = sum_u alpha^(t-u) pre[u]
  //   eps_a[t] = sum over paths of the scalar recursion, evaluated directly
  //   filtered[t] = sum_u kappa^(t-u) e[u]
  // computed here with scalar loops independent of the TraceState updates.
  const double alpha = 0.85, rho = 0.93, beta = 0.2, kappa = 0.7;
  const int n_pre = 4, n_post = 3, steps = 10;
  std::mt19937_64 rng(33);
  std::vector<Tensor> pre_hist, psi_hist;
  for (int t = 0; t < steps; ++t) {
    pre_hist.push_back(Tensor::randn({n_pre}, rng));
    psi_hist.push_back(Tensor::randn({n_post}, rng, 0.15));
  }

  TraceState tr = TraceState::zeros(n_pre, n_post);
  std::vector<TraceState> recorded;
  for (int t = 0; t < steps; ++t) {
    tr = eprop_trace_step(alpha, rho, beta, kappa, pre_hist[t], psi_hist[t], tr);
    recorded.push_back(tr);
  }

  for (int i = 0; i < n_pre; ++i)
    for (int j = 0; j < n_post; ++j) {
      double eps_v = 0.0, eps_a = 0.0, filtered = 0.0;
      for (int t = 0; t < steps; ++t) {
        // brute-force alpha-power sum for the membrane trace
        double ev_direct = 0.0;
        for (int u = 0; u <= t; ++u)
          ev_direct += std::pow(alpha, t - u) * pre_hist[u](i);
        const double psi = psi_hist[t](j);
        eps_a = psi * eps_v + (rho - psi * beta) * eps_a;
        eps_v = alpha * eps_v + pre_hist[t](i);
        CHECK(std::abs(eps_v - ev_direct) < 1e-9);
        const double e = psi * (eps_v - beta * eps_a);
        filtered = kappa * filtered + e;
        CHECK(std::abs(recorded[t].eps_v(i, j) - ev_direct) < 1e-9);
        CHECK(std::abs(recorded[t].eps_a(i, j) - eps_a) < 1e-9);
        CHECK(std::abs(recorded[t].filtered(i, j) - filtered) < 1e-9);
      }
    }
}

TEST_CASE("bptt gradient basics") {
  SUBCASE("duplicated samples leave the mean-loss gradient unchanged") {
    RecurrentSpikingModel net = small_net(CellKind::alif, 2, 5, 2, 21);
    Batch one = random_batch(1, 6, 2, 2, 5);
    Batch two;
    two.inputs = concat(
        Tensor({6, 2}, std::vector<double>(one.inputs.values())),
        Tensor({6, 2}, std::vector<double>(one.inputs.values())), 0);
    two.inputs = Tensor({2, 6, 2}, std::move(two.inputs.values()));
    two.labels = {one.labels[0], one.labels[0]};
    GradientSet g1 = bptt_gradients(net, one);
    GradientSet g2 = bptt_gradients(net, two);
    for (const auto& [id, g] : g1) CHECK(max_abs_diff(g, g2[id]) < 1e-12);
  }
  SUBCASE("zero weights and zero input give zero input-weight gradient") {
    RecurrentSpikingModel net = small_net(CellKind::lif, 2, 4, 2, 22);
    net.set_param("w_in", Tensor::zeros({2, 4}));
    net.set_param("w_rec", Tensor::zeros({4, 4}));
    Batch batch;
    batch.inputs = Tensor::zeros({2, 5, 2});
    batch.labels = {0, 1};
    GradientSet g = bptt_gradients(net, batch);
    CHECK(max_abs(g["w_in"]) == 0.0);
  }
}

TEST_CASE("e-prop output-layer gradients equal BPTT exactly") {
  for (auto kind : {CellKind::lif, CellKind::alif}) {
    RecurrentSpikingModel net = small_net(kind, 3, 8, 2, 77);
    Batch batch = random_batch(4, 12, 3, 2, 78);
    GradientSet gb = bptt_gradients(net, batch);
    GradientSet ge = eprop_gradients(net, batch);
    CHECK(max_abs_diff(gb["w_out"], ge["w_out"]) < 1e-9);
    CHECK(max_abs_diff(gb["b_out"], ge["b_out"]) < 1e-9);
  }
}

TEST_CASE("e-prop equals BPTT on one-timestep sequences") {
  RecurrentSpikingModel net = small_net(CellKind::alif, 3, 7, 2, 91);
  Batch batch = random_batch(5, 1, 3, 2, 92, 2.5);
  GradientSet gb = bptt_gradients(net, batch);
  GradientSet ge = eprop_gradients(net, batch);
  for (const auto& [id, g] : gb) CHECK(max_abs_diff(g, ge[id]) < 1e-7);
}

TEST_CASE("e-prop is exact for a single LIF neuron without recurrence") {
  // With one neuron the self-loop is structurally zero, so BPTT has no
  // cross-neuron paths: symmetric e-prop must match at every length.
  RecurrentSpikingModel net = small_net(CellKind::lif, 2, 1, 2, 55);
  for (int steps : {2, 5, 9}) {
    Batch batch = random_batch(3, steps, 2, 2, 100 + steps, 2.0);
    GradientSet gb = bptt_gradients(net, batch);
    GradientSet ge = eprop_gradients(net, batch);
    for (const auto& [id, g] : gb) CHECK(max_abs_diff(g, ge[id]) < 1e-9);
  }
}

TEST_CASE("symmetric e-prop aligns with BPTT on recurrent nets") {
  RecurrentSpikingModel net = small_net(CellKind::alif, 3, 12, 2, 13);
  Batch batch = random_batch(6, 15, 3, 2, 14, 1.8);
  GradientSet gb = bptt_gradients(net, batch);
  EpropConfig cfg;
  cfg.mode = BroadcastMode::symmetric;
  GradientSet ge = eprop_gradients(net, batch, cfg);
  ParamMap hidden_b{{"w_in", gb["w_in"]}, {"w_rec", gb["w_rec"]}};
  ParamMap hidden_e{{"w_in", ge["w_in"]}, {"w_rec", ge["w_rec"]}};
  CHECK(cosine_similarity_flat(hidden_e, hidden_b) > 0.5);
}

TEST_CASE("e-prop rejects non-spiking models") {
  MlpConfig cfg;
  cfg.dims = {4, 3};
  MlpModel mlp(cfg, 1);
  EpropRule rule;
  CHECK_FALSE(rule.supports(mlp));
  Batch batch;
  batch.inputs = Tensor::zeros({2, 4});
  batch.labels = {0, 1};
  try {
    (void)rule.gradients(mlp, batch);
    FAIL("expected an unsupported-architecture error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("recurrent spiking") != std::string::npos);
  }
}

TEST_CASE("random feedback stays fixed, adaptive mirrors readout increments") {
  RecurrentSpikingModel net = small_net(CellKind::alif, 2, 5, 2, 31);
  Batch batch = random_batch(3, 6, 2, 2, 32);

  EpropConfig rnd;
  rnd.mode = BroadcastMode::random;
  EpropRule random_rule(rnd);
  (void)random_rule.gradients(net, batch);
  const Tensor b0 = random_rule.feedback().b;
  net.set_param("w_out", add_scalar(net.param("w_out"), 0.5));
  (void)random_rule.gradients(net, batch);
  CHECK(max_abs_diff(random_rule.feedback().b, b0) == 0.0);

  net = small_net(CellKind::alif, 2, 5, 2, 31);
  EpropConfig ada;
  ada.mode = BroadcastMode::adaptive;
  EpropRule adaptive_rule(ada);
  (void)adaptive_rule.gradients(net, batch);
  const Tensor a0 = adaptive_rule.feedback().b;
  const Tensor increment = Tensor::full({5, 2}, 0.25);
  net.set_param("w_out", add(net.param("w_out"), increment));
  (void)adaptive_rule.gradients(net, batch);
  CHECK(max_abs_diff(adaptive_rule.feedback().b,
                     add(a0, transpose(increment))) < 1e-12);
}

TEST_CASE("firing rate regularizer") {
  SUBCASE("exactly on target costs nothing") {
    Tensor spikes = Tensor::zeros({1, 100, 3});
    // 1 spike per 100 steps at dt=1ms = 10 Hz
    for (int j = 0; j < 3; ++j) spikes(0, 99, j) = 1.0;
    CHECK(firing_rate_regularizer(spikes, 10.0, 1e-3, 2.0) ==
          doctest::Approx(0.0));
  }
  SUBCASE("a silent network costs coef * n * target^2") {
    Tensor spikes = Tensor::zeros({2, 50, 4});
    CHECK(firing_rate_regularizer(spikes, 10.0, 1e-3, 3.0) ==
          doctest::Approx(3.0 * 4 * 100.0));
  }
  SUBCASE("taped version matches and differentiates") {
    RecurrentSpikingModel net = small_net(CellKind::lif, 2, 4, 2, 41);
    Batch batch = random_batch(2, 20, 2, 2, 42, 2.0);
    UnrollResult r = net.unroll(batch.inputs);
    const double plain = firing_rate_regularizer(r.spikes, 10.0, 1e-3, 0.5);
    Tape tape;
    TapedForward fw = net.forward_on_tape(tape, batch.inputs);
    Var reg = firing_rate_regularizer(fw.spikes_t, 10.0, 1e-3, 0.5);
    CHECK(reg.value().item() == doctest::Approx(plain).epsilon(1e-12));
    GradientSet g = backward(tape, reg);  // flows through the pseudo-derivative
    CHECK(g.count("w_in") == 1);
  }
  SUBCASE("training against the regularizer moves the rate toward target") {
    RecurrentSpikingModel net = small_net(CellKind::lif, 2, 8, 2, 43);
    std::mt19937_64 rng(44);
    Batch batch;
    batch.inputs = Tensor::randn({4, 30, 2}, rng, 3.0);  // noisy drive
    batch.labels = {0, 1, 0, 1};
    const double dt = 1e-3, target = 10.0;
    auto rate = [&] {
      return firing_rate_hz(net.unroll(batch.inputs).spikes, dt);
    };
    const double before = std::abs(rate() - target);
    BpttConfig cfg;
    cfg.loss.kind = LossKind::mse;  // irrelevant; reg dominates
    cfg.reg = {1e-3, target, dt};
    Optimizer opt({OptimizerKind::adam, 5e-3});
    BpttRule rule(cfg);
    for (int step = 0; step < 50; ++step) {
      GradientSet g = rule.gradients(net, batch);
      // keep only the regularizer's pull: zero the readout path
      g["w_out"] = Tensor::zeros(g["w_out"].shape());
      g["b_out"] = Tensor::zeros(g["b_out"].shape());
      opt.apply(net, g);
    }
    const double after = std::abs(rate() - target);
    CHECK(after < before);
  }
}

TEST_CASE("manhattan updates") {
  ManhattanConfig cfg;
  cfg.delta = 0.01;

  SUBCASE("fixed magnitude against the gradient sign, sign(0)=0") {
    GradientSet grads{{"w", Tensor::from_row({0.2, -0.1, 0.0})}};
    ParamMap weights{{"w", Tensor::from_row({0.0, 0.0, 0.0})}};
    GradientSet d = manhattan_update(grads, weights, cfg);
    CHECK(d["w"](0) == doctest::Approx(-0.01));
    CHECK(d["w"](1) == doctest::Approx(0.01));
    CHECK(d["w"](2) == 0.0);
  }
  SUBCASE("clipping pins weights at the conductance bounds") {
    cfg.g_min = -1.0;
    cfg.g_max = 1.0;
    GradientSet grads{{"w", Tensor::from_row({-0.5})}};
    ParamMap weights{{"w", Tensor::from_row({1.0})}};  // at g_max, grad pushes up
    GradientSet d = manhattan_update(grads, weights, cfg);
    CHECK(d["w"](0) == 0.0);
  }
  SUBCASE("update is invariant to gradient scale") {
    GradientSet g1{{"w", Tensor::from_row({0.2, -0.1, 0.0})}};
    GradientSet g2{{"w", mul_scalar(g1["w"], 1000.0)}};
    ParamMap weights{{"w", Tensor::from_row({0.3, -0.3, 0.0})}};
    CHECK(max_abs_diff(manhattan_update(g1, weights, cfg)["w"],
                       manhattan_update(g2, weights, cfg)["w"]) == 0.0);
  }
  SUBCASE("sup-norm of the delta never exceeds delta for in-range weights") {
    std::mt19937_64 rng(51);
    GradientSet grads{{"w", Tensor::randn({6, 6}, rng)}};
    Tensor w = Tensor::randn({6, 6}, rng, 0.2);
    for (auto& v : w.values()) v = std::clamp(v, -0.5, 0.5);
    ParamMap weights{{"w", w}};
    cfg.g_min = -0.5;
    cfg.g_max = 0.5;
    GradientSet d = manhattan_update(grads, weights, cfg);
    CHECK(max_abs(d["w"]) <= cfg.delta + 1e-15);
  }
  SUBCASE("bounds must be ordered and paired") {
    cfg.g_min = 1.0;
    cfg.g_max.reset();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.g_max = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("constrained manhattan keeps every weight inside the bounds") {
  MlpConfig mcfg;
  mcfg.dims = {3, 6, 2};
  MlpModel model(mcfg, 61);
  ManhattanConfig cfg;
  cfg.delta = 0.05;
  cfg.g_min = -0.3;
  cfg.g_max = 0.3;
  ManhattanRule rule(cfg);
  Optimizer opt({OptimizerKind::naive});
  std::mt19937_64 rng(62);
  for (int step = 0; step < 30; ++step) {
    Batch batch;
    batch.inputs = Tensor::randn({8, 3}, rng);
    std::uniform_int_distribution<int> lab(0, 1);
    batch.labels.clear();
    for (int i = 0; i < 8; ++i) batch.labels.push_back(lab(rng));
    opt.apply(model, rule.gradients(model, batch));
    for (const auto& id : model.param_ids())
      for (double v : model.param(id).values()) {
        CHECK(v >= -0.3 - 1e-15);
        CHECK(v <= 0.3 + 1e-15);
      }
  }
}

TEST_CASE("rules count their gradient evaluations") {
  RecurrentSpikingModel net = small_net(CellKind::lif, 2, 4, 2, 71);
  Batch batch = random_batch(2, 5, 2, 2, 72);
  BpttRule rule;
  CHECK(rule.eval_count() == 0);
  (void)rule.gradients(net, batch);
  (void)rule.gradients(net, batch);
  CHECK(rule.eval_count() == 2);
}
