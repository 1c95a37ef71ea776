#include "spikekit/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

namespace {

Tape* tape_of(const Var& a, const Var& b) {
  Tape* ta = a.recorded() ? a.tape() : nullptr;
  Tape* tb = b.recorded() ? b.tape() : nullptr;
  if (ta && tb && ta != tb)
    throw std::invalid_argument("operands recorded on two different tapes");
  return ta ? ta : tb;
}

Tape* tape_of(const Var& a) { return a.recorded() ? a.tape() : nullptr; }

void check_vth(double v_th) {
  if (v_th <= 0.0)
    throw std::invalid_argument("threshold v_th must be positive, got " +
                                std::to_string(v_th));
}

}  // namespace

Tensor pseudo_multiplier(const Tensor& x, const PseudoDerivative& pd,
                         double v_th) {
  check_vth(v_th);
  Tensor out = x;
  for (auto& v : out.values()) {
    double d = 1.0 - std::abs(v) / v_th;
    v = pd.gamma * (d > 0.0 ? d : 0.0);
  }
  return out;
}

Tensor heaviside(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = v >= 0.0 ? 1.0 : 0.0;
  return out;
}

Tensor heaviside_with_pseudo(const Tensor& x, const PseudoDerivative& pd,
                             double v_th) {
  check_vth(v_th);
  (void)pd;
  return heaviside(x);
}

Var Tape::param(const std::string& id, const Tensor& value) {
  for (const auto& [pid, node] : params_)
    if (pid == id)
      throw std::invalid_argument("parameter '" + id +
                                  "' already tracked on this tape");
  Var v = emit(value, BackwardFn{});
  params_.emplace_back(id, v.node());
  param_shapes_.push_back(value.shape());
  return v;
}

Var Tape::emit(Tensor value, BackwardFn back) {
  if (consumed_)
    throw std::logic_error("recording on a consumed tape");
  nodes_.push_back(Node{std::move(back)});
  return Var(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int node, const Tensor& g) {
  Tensor& slot = adjoints_[static_cast<size_t>(node)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    require_same_shape(slot, g, "adjoint accumulate");
    double* p = slot.data();
    const double* q = g.data();
    for (std::int64_t i = 0; i < slot.size(); ++i) p[i] += q[i];
  }
}

GradientSet backward(Tape& tape, const Var& loss) {
  if (tape.consumed_) throw std::logic_error("backward on a consumed tape");
  if (!loss.recorded() || loss.tape() != &tape)
    throw std::invalid_argument("loss is not recorded on this tape");
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward expects a scalar loss, got shape " +
                                loss.value().shape_str());

  tape.adjoints_.assign(tape.nodes_.size(), Tensor());
  tape.accumulate(loss.node(), Tensor::scalar(1.0));
  for (int i = static_cast<int>(tape.nodes_.size()) - 1; i >= 0; --i) {
    const Tensor& g = tape.adjoints_[static_cast<size_t>(i)];
    if (g.size() == 0) continue;  // node does not influence the loss
    const auto& back = tape.nodes_[static_cast<size_t>(i)].back;
    if (back) back(g, tape);
  }

  GradientSet grads;
  for (size_t k = 0; k < tape.params_.size(); ++k) {
    const auto& [id, node] = tape.params_[k];
    const Tensor& adj = tape.adjoints_[static_cast<size_t>(node)];
    grads[id] = adj.size() == 0 ? Tensor::zeros(tape.param_shapes_[k]) : adj;
    ensure_finite(grads[id], "backward");
  }
  tape.consumed_ = true;
  tape.nodes_.clear();
  tape.adjoints_.clear();
  return grads;
}

// ---------------------------------------------------------------------------
// Recorded operations

Var add(const Var& a, const Var& b) {
  Tensor out = add(a.value(), b.value());
  Tape* tp = tape_of(a, b);
  if (!tp) return Var(std::move(out));
  const int na = a.node(), nb = b.node();
  return tp->emit(std::move(out), [na, nb](const Tensor& g, Tape& t) {
    if (na >= 0) t.accumulate(na, g);
    if (nb >= 0) t.accumulate(nb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = sub(a.value(), b.value());
  Tape* tp = tape_of(a, b);
  if (!tp) return Var(std::move(out));
  const int na = a.node(), nb = b.node();
  return tp->emit(std::move(out), [na, nb](const Tensor& g, Tape& t) {
    if (na >= 0) t.accumulate(na, g);
    if (nb >= 0) t.accumulate(nb, neg(g));
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = mul(a.value(), b.value());
  Tape* tp = tape_of(a, b);
  if (!tp) return Var(std::move(out));
  const int na = a.node(), nb = b.node();
  const Tensor av = a.value(), bv = b.value();
  return tp->emit(std::move(out), [na, nb, av, bv](const Tensor& g, Tape& t) {
    if (na >= 0) t.accumulate(na, mul(g, bv));
    if (nb >= 0) t.accumulate(nb, mul(g, av));
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = add_scalar(a.value(), c);
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  return tp->emit(std::move(out), [na](const Tensor& g, Tape& t) {
    t.accumulate(na, g);
  });
}

Var mul_scalar(const Var& a, double c) {
  Tensor out = mul_scalar(a.value(), c);
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  return tp->emit(std::move(out), [na, c](const Tensor& g, Tape& t) {
    t.accumulate(na, mul_scalar(g, c));
  });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  Tape* tp = tape_of(a, b);
  if (!tp) return Var(std::move(out));
  const int na = a.node(), nb = b.node();
  const Tensor av = a.value(), bv = b.value();
  return tp->emit(std::move(out), [na, nb, av, bv](const Tensor& g, Tape& t) {
    if (na >= 0) t.accumulate(na, matmul(g, transpose(bv)));
    if (nb >= 0) t.accumulate(nb, matmul(transpose(av), g));
  });
}

Var add_rowvec(const Var& mat, const Var& vec) {
  Tensor out = add_rowvec(mat.value(), vec.value());
  Tape* tp = tape_of(mat, vec);
  if (!tp) return Var(std::move(out));
  const int nm = mat.node(), nv = vec.node();
  return tp->emit(std::move(out), [nm, nv](const Tensor& g, Tape& t) {
    if (nm >= 0) t.accumulate(nm, g);
    if (nv >= 0) t.accumulate(nv, sum_axis0(g));
  });
}

Var expand_rows(const Var& vec, int rows) {
  Tensor out = expand_rows(vec.value(), rows);
  Tape* tp = tape_of(vec);
  if (!tp) return Var(std::move(out));
  const int nv = vec.node();
  return tp->emit(std::move(out), [nv](const Tensor& g, Tape& t) {
    t.accumulate(nv, sum_axis0(g));
  });
}

Var concat(const Var& a, const Var& b, int axis) {
  Tensor out = concat(a.value(), b.value(), axis);
  Tape* tp = tape_of(a, b);
  if (!tp) return Var(std::move(out));
  const int na = a.node(), nb = b.node();
  const auto sa = a.value().shape();
  const int split = axis == 0 ? a.value().dim(0)
                              : a.value().dim(a.value().rank() - 1);
  const int total = axis == 0 ? out.dim(0) : out.dim(out.rank() - 1);
  return tp->emit(std::move(out),
                  [na, nb, axis, split, total](const Tensor& g, Tape& t) {
                    if (na >= 0) t.accumulate(na, slice(g, axis, 0, split));
                    if (nb >= 0) t.accumulate(nb, slice(g, axis, split, total));
                  });
}

Var slice(const Var& a, int axis, int start, int stop) {
  Tensor out = slice(a.value(), axis, start, stop);
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const auto shape = a.value().shape();
  return tp->emit(std::move(out),
                  [na, axis, start, shape](const Tensor& g, Tape& t) {
                    Tensor full = Tensor::zeros(shape);
                    if (full.rank() == 1) {
                      for (int i = 0; i < g.dim(0); ++i) full(start + i) = g(i);
                    } else if (axis == 0) {
                      for (int i = 0; i < g.dim(0); ++i)
                        for (int j = 0; j < g.dim(1); ++j)
                          full(start + i, j) = g(i, j);
                    } else {
                      for (int i = 0; i < g.dim(0); ++i)
                        for (int j = 0; j < g.dim(1); ++j)
                          full(i, start + j) = g(i, j);
                    }
                    t.accumulate(na, full);
                  });
}

Var sum(const Var& a) {
  Tensor out = sum(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const auto shape = a.value().shape();
  return tp->emit(std::move(out), [na, shape](const Tensor& g, Tape& t) {
    t.accumulate(na, Tensor::full(shape, g.item()));
  });
}

Var mean(const Var& a) {
  Tensor out = mean(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const auto shape = a.value().shape();
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return tp->emit(std::move(out), [na, shape, inv](const Tensor& g, Tape& t) {
    t.accumulate(na, Tensor::full(shape, g.item() * inv));
  });
}

Var sum_axis0(const Var& a) {
  Tensor out = sum_axis0(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const int rows = a.value().dim(0);
  return tp->emit(std::move(out), [na, rows](const Tensor& g, Tape& t) {
    t.accumulate(na, expand_rows(g, rows));
  });
}

Var mean_axis0(const Var& a) {
  Tensor out = mean_axis0(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const int rows = a.value().dim(0);
  return tp->emit(std::move(out), [na, rows](const Tensor& g, Tape& t) {
    t.accumulate(na, expand_rows(mul_scalar(g, 1.0 / rows), rows));
  });
}

Var exp(const Var& a) {
  Tensor out = exp(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor ov = out;
  return tp->emit(std::move(out), [na, ov](const Tensor& g, Tape& t) {
    t.accumulate(na, mul(g, ov));
  });
}

Var log(const Var& a) {
  Tensor out = log(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor av = a.value();
  return tp->emit(std::move(out), [na, av](const Tensor& g, Tape& t) {
    Tensor inv = av;
    for (auto& v : inv.values()) v = 1.0 / v;
    t.accumulate(na, mul(g, inv));
  });
}

Var sigmoid(const Var& a) {
  Tensor out = sigmoid(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor ov = out;
  return tp->emit(std::move(out), [na, ov](const Tensor& g, Tape& t) {
    Tensor d = ov;
    for (auto& v : d.values()) v = v * (1.0 - v);
    t.accumulate(na, mul(g, d));
  });
}

Var relu(const Var& a) {
  Tensor out = relu(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor av = a.value();
  return tp->emit(std::move(out), [na, av](const Tensor& g, Tape& t) {
    Tensor d = av;
    for (auto& v : d.values()) v = v > 0.0 ? 1.0 : 0.0;
    t.accumulate(na, mul(g, d));
  });
}

Var tanh(const Var& a) {
  Tensor out = tanh(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor ov = out;
  return tp->emit(std::move(out), [na, ov](const Tensor& g, Tape& t) {
    Tensor d = ov;
    for (auto& v : d.values()) v = 1.0 - v * v;
    t.accumulate(na, mul(g, d));
  });
}

Var softmax(const Var& a) {
  Tensor out = softmax(a.value());
  Tape* tp = tape_of(a);
  if (!tp) return Var(std::move(out));
  const int na = a.node();
  const Tensor p = out;
  return tp->emit(std::move(out), [na, p](const Tensor& g, Tape& t) {
    // dL/dx_ij = p_ij * (g_ij - sum_k g_ik p_ik)
    Tensor ga = g;
    for (int i = 0; i < p.dim(0); ++i) {
      double dot = 0.0;
      for (int k = 0; k < p.dim(1); ++k) dot += g(i, k) * p(i, k);
      for (int j = 0; j < p.dim(1); ++j)
        ga(i, j) = p(i, j) * (g(i, j) - dot);
    }
    t.accumulate(na, ga);
  });
}

Var detach(const Var& a) { return Var(a.value()); }

Var heaviside_with_pseudo(const Var& x, const PseudoDerivative& pd,
                          double v_th) {
  Tensor psi = pseudo_multiplier(x.value(), pd, v_th);
  Tensor out = heaviside(x.value());
  Tape* tp = tape_of(x);
  if (!tp) return Var(std::move(out));
  const int nx = x.node();
  return tp->emit(std::move(out), [nx, psi](const Tensor& g, Tape& t) {
    t.accumulate(nx, mul(g, psi));
  });
}

double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels) {
  if (logits.rank() != 2 ||
      logits.dim(0) != static_cast<int>(labels.size()))
    throw std::invalid_argument("softmax_cross_entropy: logits " +
                                logits.shape_str() + " vs " +
                                std::to_string(labels.size()) + " labels");
  const Tensor p = softmax(logits);
  double loss = 0.0;
  for (int i = 0; i < p.dim(0); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= p.dim(1))
      throw std::invalid_argument("label " + std::to_string(y) +
                                  " out of range [0," +
                                  std::to_string(p.dim(1)) + ")");
    loss -= std::log(std::max(p(i, y), 1e-300));
  }
  return loss / p.dim(0);
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  double loss = softmax_cross_entropy(logits.value(), labels);
  Tape* tp = tape_of(logits);
  if (!tp) return Var(Tensor::scalar(loss));
  const int nl = logits.node();
  const Tensor p = softmax(logits.value());
  const std::vector<int> ys = labels;
  return tp->emit(Tensor::scalar(loss), [nl, p, ys](const Tensor& g, Tape& t) {
    Tensor ga = p;
    const double scale = g.item() / p.dim(0);
    for (int i = 0; i < p.dim(0); ++i) {
      ga(i, ys[static_cast<size_t>(i)]) -= 1.0;
      for (int j = 0; j < p.dim(1); ++j) ga(i, j) *= scale;
    }
    t.accumulate(nl, ga);
  });
}

GradientSet finite_difference_gradient(
    const std::function<double(const ParamMap&)>& f, const ParamMap& params,
    double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite differences need eps > 0");
  GradientSet grads;
  ParamMap work = params;
  for (const auto& [id, p] : params) {
    Tensor g = Tensor::zeros(p.shape());
    for (std::int64_t i = 0; i < p.size(); ++i) {
      Tensor& wp = work[id];
      const double orig = wp.data()[i];
      wp.data()[i] = orig + eps;
      const double fp = f(work);
      wp.data()[i] = orig - eps;
      const double fm = f(work);
      wp.data()[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite differences hit a non-finite value");
      g.data()[i] = (fp - fm) / (2.0 * eps);
    }
    grads[id] = std::move(g);
  }
  return grads;
}

}  // namespace spikekit
