#include "tlerc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tlerc/kernels.hpp"

namespace tlerc {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  Node node;
  node.kind = "constant";
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParameterSet& params, const std::string& name) {
  if (auto it = leaves_.find(name); it != leaves_.end()) return Var(this, it->second);
  Node node;
  node.kind = "parameter";
  node.ref = &params.at(name);
  node.requires_grad = grad_enabled_ && !(frozen_ && frozen_->contains(name));
  nodes_.push_back(std::move(node));
  leaves_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* kind, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  if (!value.all_finite())
    throw NumericError(std::string("numeric overflow in ") + kind + ": non-finite output");
  Node node;
  node.kind = kind;
  node.own = std::move(value);
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError(std::string(kind) + ": inputs from another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  if (needs && grad_enabled_) {
    node.requires_grad = true;
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.own;
}

std::span<double> Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (consumed_) throw ContractError("backward: tape already consumed");
  if (&loss.tape() != this) throw ContractError("backward: loss from another tape");
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  consumed_ = true;
  if (nodes_[loss.id()].requires_grad) {
    grad(loss.id())[0] = 1.0;
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }
  GradientMap out;
  for (const auto& [name, id] : leaves_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (n.grad.empty())
      out.emplace(name, Tensor::zeros(n.ref->shape()));
    else
      out.emplace(name, Tensor(n.ref->shape(), n.grad));
  }
  return out;
}

std::vector<double> softmax_values(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> log_softmax_values(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

std::size_t argmax(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

namespace ops {
namespace {

void require_same_shape(const char* kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(kind) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

bool wants(Tape& t, std::size_t id) { return t.requires_grad(id); }

Tensor vector_out(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor::unchecked(std::move(s), std::move(v));
}

Tensor scalar_out(double v) { return Tensor::unchecked({1}, {v}); }

double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var elementwise(Elementwise kind, Var x, double scalar) {
  Tape& t = x.tape();
  const Tensor& in = x.value();
  std::vector<double> out(in.size());
  const char* name = "";
  switch (kind) {
    case Elementwise::sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(in[i]);
      break;
    case Elementwise::tanh:
      name = "tanh";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case Elementwise::softplus:
      name = "softplus";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_value(in[i]);
      break;
    case Elementwise::exp:
      name = "exp";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case Elementwise::log:
      name = "log";
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (in[i] <= 0.0) throw NumericError("log: non-positive input");
        out[i] = std::log(in[i]);
      }
      break;
    case Elementwise::neg:
      name = "neg";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = -in[i];
      break;
    case Elementwise::mul_scalar:
      name = "mul_scalar";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * scalar;
      break;
  }
  const std::size_t xi = x.id();
  return t.record(
      name, Tensor::unchecked(in.shape(), std::move(out)), {x},
      [kind, xi, scalar](Tape& tape, std::span<const double> g) {
        if (!wants(tape, xi)) return;
        const Tensor& xv = tape.value(xi);
        auto gx = tape.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          double d = 0.0;
          switch (kind) {
            case Elementwise::sigmoid: {
              const double s = sigmoid_value(xv[i]);
              d = s * (1.0 - s);
              break;
            }
            case Elementwise::tanh: {
              const double th = std::tanh(xv[i]);
              d = 1.0 - th * th;
              break;
            }
            case Elementwise::softplus:
              d = sigmoid_value(xv[i]);
              break;
            case Elementwise::exp:
              d = std::exp(xv[i]);
              break;
            case Elementwise::log:
              d = 1.0 / xv[i];
              break;
            case Elementwise::neg:
              d = -1.0;
              break;
            case Elementwise::mul_scalar:
              d = scalar;
              break;
          }
          gx[i] += g[i] * d;
        }
      });
}

Var sigmoid(Var x) { return elementwise(Elementwise::sigmoid, x); }
Var tanh(Var x) { return elementwise(Elementwise::tanh, x); }
Var softplus(Var x) { return elementwise(Elementwise::softplus, x); }
Var exp(Var x) { return elementwise(Elementwise::exp, x); }
Var log(Var x) { return elementwise(Elementwise::log, x); }
Var neg(Var x) { return elementwise(Elementwise::neg, x); }
Var mul_scalar(Var x, double c) { return elementwise(Elementwise::mul_scalar, x, c); }

Var add_scalar(Var x, double c) {
  const Tensor& in = x.value();
  std::vector<double> out(in.values());
  for (auto& v : out) v += c;
  const std::size_t xi = x.id();
  return x.tape().record("add_scalar", Tensor::unchecked(in.shape(), std::move(out)), {x},
                         [xi](Tape& tape, std::span<const double> g) {
                           if (!wants(tape, xi)) return;
                           auto gx = tape.grad(xi);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("add", Tensor::unchecked(av.shape(), std::move(out)), {a, b},
                         [ai, bi](Tape& tape, std::span<const double> g) {
                           for (std::size_t id : {ai, bi}) {
                             if (!wants(tape, id)) continue;
                             auto gx = tape.grad(id);
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                           }
                         });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("sub", Tensor::unchecked(av.shape(), std::move(out)), {a, b},
                         [ai, bi](Tape& tape, std::span<const double> g) {
                           if (wants(tape, ai)) {
                             auto ga = tape.grad(ai);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                           }
                           if (wants(tape, bi)) {
                             auto gb = tape.grad(bi);
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("mul", Tensor::unchecked(av.shape(), std::move(out)), {a, b},
                         [ai, bi](Tape& tape, std::span<const double> g) {
                           const Tensor& av = tape.value(ai);
                           const Tensor& bv = tape.value(bi);
                           if (wants(tape, ai)) {
                             auto ga = tape.grad(ai);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (wants(tape, bi)) {
                             auto gb = tape.grad(bi);
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         });
}

Var div(Var a, Var b) {
  require_same_shape("div", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("div", Tensor::unchecked(av.shape(), std::move(out)), {a, b},
                         [ai, bi](Tape& tape, std::span<const double> g) {
                           const Tensor& av = tape.value(ai);
                           const Tensor& bv = tape.value(bi);
                           if (wants(tape, ai)) {
                             auto ga = tape.grad(ai);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bv[i];
                           }
                           if (wants(tape, bi)) {
                             auto gb = tape.grad(bi);
                             for (std::size_t i = 0; i < gb.size(); ++i)
                               gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                           }
                         });
}

namespace {

Var affine(const char* kind, Var W, Var x, const Var* b) {
  const Tensor& Wv = W.value();
  const Tensor& xv = x.value();
  if (Wv.rank() != 2 || xv.rank() != 1 || Wv.cols() != xv.size())
    throw ShapeError(std::string(kind) + ": dimension mismatch W" + shape_str(Wv.shape()) +
                     " x" + shape_str(xv.shape()));
  const std::size_t m = Wv.rows(), n = Wv.cols();
  std::span<const double> bias;
  if (b) {
    const Tensor& bv = b->value();
    if (bv.rank() != 1 || bv.size() != m)
      throw ShapeError(std::string(kind) + ": bias " + shape_str(bv.shape()) +
                       " does not match W" + shape_str(Wv.shape()));
    bias = bv.data();
  }
  std::vector<double> out(m);
  kernels::matvec(Wv.data(), m, n, xv.data(), bias, out);
  const std::size_t wi = W.id(), xi = x.id();
  const std::size_t bi = b ? b->id() : SIZE_MAX;
  Tape& t = W.tape();
  auto fn = [wi, xi, bi, m, n](Tape& tape, std::span<const double> g) {
    if (wants(tape, xi)) kernels::matvec_transposed_acc(tape.value(wi).data(), m, n, g, tape.grad(xi));
    if (wants(tape, wi)) kernels::outer_acc(g, tape.value(xi).data(), tape.grad(wi));
    if (bi != SIZE_MAX && wants(tape, bi)) {
      auto gb = tape.grad(bi);
      for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
    }
  };
  if (b) return t.record(kind, vector_out(std::move(out)), {W, x, *b}, fn);
  return t.record(kind, vector_out(std::move(out)), {W, x}, fn);
}

}  // namespace

Var linear(Var x, Var W, Var b) { return affine("linear", W, x, &b); }
Var matvec(Var W, Var x) { return affine("matvec", W, x, nullptr); }

Var concat(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 1 || bv.rank() != 1)
    throw ShapeError("concat: vectors required, got " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  std::vector<double> out(av.values());
  out.insert(out.end(), bv.values().begin(), bv.values().end());
  const std::size_t ai = a.id(), bi = b.id(), na = av.size();
  return a.tape().record("concat", vector_out(std::move(out)), {a, b},
                         [ai, bi, na](Tape& tape, std::span<const double> g) {
                           if (wants(tape, ai)) {
                             auto ga = tape.grad(ai);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                           }
                           if (wants(tape, bi)) {
                             auto gb = tape.grad(bi);
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                           }
                         });
}

Var slice(Var x, std::size_t offset, std::size_t length) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || length == 0 || offset + length > xv.size())
    throw ShapeError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                     ") out of range for " + shape_str(xv.shape()));
  std::vector<double> out(xv.values().begin() + static_cast<std::ptrdiff_t>(offset),
                          xv.values().begin() + static_cast<std::ptrdiff_t>(offset + length));
  const std::size_t xi = x.id();
  return x.tape().record("slice", vector_out(std::move(out)), {x},
                         [xi, offset](Tape& tape, std::span<const double> g) {
                           if (!wants(tape, xi)) return;
                           auto gx = tape.grad(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
                         });
}

Var row(Var table, std::size_t index) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("row: matrix required, got " + shape_str(tv.shape()));
  if (index >= tv.rows())
    throw IndexError("row: index " + std::to_string(index) + " out of range for " +
                     std::to_string(tv.rows()) + " rows");
  const std::size_t cols = tv.cols();
  std::vector<double> out(tv.values().begin() + static_cast<std::ptrdiff_t>(index * cols),
                          tv.values().begin() + static_cast<std::ptrdiff_t>((index + 1) * cols));
  const std::size_t ti = table.id();
  return table.tape().record("row", vector_out(std::move(out)), {table},
                             [ti, index, cols](Tape& tape, std::span<const double> g) {
                               if (!wants(tape, ti)) return;
                               auto gt = tape.grad(ti);
                               for (std::size_t j = 0; j < cols; ++j) gt[index * cols + j] += g[j];
                             });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const std::size_t xi = x.id();
  return x.tape().record("sum", scalar_out(s), {x},
                         [xi](Tape& tape, std::span<const double> g) {
                           if (!wants(tape, xi)) return;
                           auto gx = tape.grad(xi);
                           for (auto& v : gx) v += g[0];
                         });
}

Var sum_scalars(std::span<const Var> terms) {
  if (terms.empty()) throw ContractError("sum_scalars: no terms");
  Tape& t = terms.front().tape();
  double s = 0.0;
  std::vector<std::size_t> ids;
  ids.reserve(terms.size());
  bool needs = false;
  for (const Var& v : terms) {
    if (&v.tape() != &t) throw ContractError("sum_scalars: inputs from another tape");
    if (v.size() != 1) throw ShapeError("sum_scalars: non-scalar term " + shape_str(v.shape()));
    s += v.item();
    ids.push_back(v.id());
    needs = needs || v.requires_grad();
  }
  auto fn = [ids = std::move(ids)](Tape& tape, std::span<const double> g) {
    for (std::size_t id : ids)
      if (wants(tape, id)) tape.grad(id)[0] += g[0];
  };
  // record() derives requires_grad from its listed inputs, so list a term
  // that carries a gradient when one exists.
  Var anchor = terms.front();
  if (needs)
    for (const Var& v : terms)
      if (v.requires_grad()) {
        anchor = v;
        break;
      }
  return t.record("sum_scalars", scalar_out(s), {anchor}, std::move(fn));
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  auto out = softmax_values(xv.data());
  const std::size_t xi = x.id();
  return x.tape().record("softmax", Tensor::unchecked(xv.shape(), out), {x},
                         [xi, out](Tape& tape, std::span<const double> g) {
                           if (!wants(tape, xi)) return;
                           double dot = 0.0;
                           for (std::size_t i = 0; i < out.size(); ++i) dot += g[i] * out[i];
                           auto gx = tape.grad(xi);
                           for (std::size_t i = 0; i < out.size(); ++i)
                             gx[i] += out[i] * (g[i] - dot);
                         });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  auto out = log_softmax_values(xv.data());
  const std::size_t xi = x.id();
  return x.tape().record("log_softmax", Tensor::unchecked(xv.shape(), out), {x},
                         [xi, out](Tape& tape, std::span<const double> g) {
                           if (!wants(tape, xi)) return;
                           double total = 0.0;
                           for (double v : g) total += v;
                           auto gx = tape.grad(xi);
                           for (std::size_t i = 0; i < out.size(); ++i)
                             gx[i] += g[i] - std::exp(out[i]) * total;
                         });
}

Var cross_entropy(Var logits, std::size_t gold) {
  const Tensor& lv = logits.value();
  if (gold >= lv.size())
    throw IndexError("cross_entropy: gold index " + std::to_string(gold) + " out of range for " +
                     std::to_string(lv.size()) + " classes");
  auto lsm = log_softmax_values(lv.data());
  const double loss = -lsm[gold];
  const std::size_t li = logits.id();
  return logits.tape().record("cross_entropy", scalar_out(loss < 0.0 ? 0.0 : loss), {logits},
                              [li, gold, lsm](Tape& tape, std::span<const double> g) {
                                if (!wants(tape, li)) return;
                                auto gl = tape.grad(li);
                                for (std::size_t i = 0; i < lsm.size(); ++i)
                                  gl[i] += g[0] * (std::exp(lsm[i]) - (i == gold ? 1.0 : 0.0));
                              });
}

Var mse(Var pred, Var target) {
  require_same_shape("mse", pred.value(), target.value());
  const Tensor& pv = pred.value();
  const Tensor& tv = target.value();
  const double n = static_cast<double>(pv.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    s += d * d;
  }
  const std::size_t pi = pred.id(), ti = target.id();
  return pred.tape().record("mse", scalar_out(s / n), {pred, target},
                            [pi, ti, n](Tape& tape, std::span<const double> g) {
                              const Tensor& pv = tape.value(pi);
                              const Tensor& tv = tape.value(ti);
                              if (wants(tape, pi)) {
                                auto gp = tape.grad(pi);
                                for (std::size_t i = 0; i < gp.size(); ++i)
                                  gp[i] += g[0] * 2.0 * (pv[i] - tv[i]) / n;
                              }
                              if (wants(tape, ti)) {
                                auto gt = tape.grad(ti);
                                for (std::size_t i = 0; i < gt.size(); ++i)
                                  gt[i] -= g[0] * 2.0 * (pv[i] - tv[i]) / n;
                              }
                            });
}

}  // namespace ops
}  // namespace tlerc
