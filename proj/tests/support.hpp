#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlerc/gradcheck.hpp"
#include "tlerc/recurrent.hpp"

namespace testing {

using Vec = std::vector<double>;

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-by-scalar GRU: one loop per equation.
inline Vec oracle_gru(const tlerc::ParameterSet& ps, const std::string& pre, const Vec& x, const Vec& h) {
  auto W = [&](const std::string& n) { return ps.at(pre + "/" + n); };
  const std::size_t H = h.size(), I = x.size();
  auto affine = [&](const std::string& g, const Vec& hin) {
    Vec out(H);
    const tlerc::Tensor V = W("V_" + g), U = W("W_" + g), b = W("b_" + g);
    for (std::size_t i = 0; i < H; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < I; ++j) s += V.at(i, j) * x[j];
      for (std::size_t j = 0; j < H; ++j) s += U.at(i, j) * hin[j];
      out[i] = s;
    }
    return out;
  };
  Vec z = affine("z", h), r = affine("r", h);
  for (auto& v : z) v = sigm(v);
  for (auto& v : r) v = sigm(v);
  Vec hr(H);
  for (std::size_t i = 0; i < H; ++i) hr[i] = h[i] * r[i];
  Vec v = affine("h", hr);
  Vec out(H);
  for (std::size_t i = 0; i < H; ++i) out[i] = (1.0 - z[i]) * std::tanh(v[i]) + z[i] * h[i];
  return out;
}

inline Vec row_of(const tlerc::Tensor& t, std::size_t r) {
  Vec out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

// W x + b.
inline Vec oracle_affine(const tlerc::Tensor& W, const tlerc::Tensor& b, const Vec& x) {
  Vec out(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < W.cols(); ++j) s += W.at(i, j) * x[j];
    out[i] = s;
  }
  return out;
}

inline Vec oracle_tanh(Vec v) {
  for (auto& x : v) x = std::tanh(x);
  return v;
}

inline Vec cat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// -log softmax(logits)[gold], computed with long double.
inline double oracle_ce(const Vec& logits, std::size_t gold) {
  long double z = 0;
  for (double l : logits) z += std::exp(static_cast<long double>(l));
  return static_cast<double>(std::log(z) - logits[gold]);
}

// Central differences with an absolute floor on the normalizer. At eps 1e-5 a
// loss of magnitude ~10 carries ~1e-10 of roundoff in the difference quotient,
// so coordinates with true gradients below ~1e-6 cannot be judged relatively.
struct FloorCheck {
  double worst = 0.0;
  std::string name;
  bool pass = true;
};

inline FloorCheck floored_check(const tlerc::LossFn& f, const tlerc::ParameterSet& params,
                                double floor = 1e-5, double tol = 1e-4, double eps = 1e-5) {
  using namespace tlerc;
  GradientMap analytic;
  {
    Tape tape;
    analytic = tape.backward(f(tape, params));
  }
  auto eval = [&](const ParameterSet& p) {
    Tape tape(false);
    return f(tape, p).item();
  };
  FloorCheck out;
  ParameterSet probe = params;
  for (const auto& [name, value] : params) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double x = value[i];
      probe.at(name)[i] = x + eps;
      const double up = eval(probe);
      probe.at(name)[i] = x - eps;
      const double down = eval(probe);
      probe.at(name)[i] = x;
      const double n = (up - down) / (2 * eps);
      const double a = analytic.contains(name) ? analytic.at(name)[i] : 0.0;
      const double e = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
      if (e > out.worst) {
        out.worst = e;
        out.name = name;
      }
    }
  }
  out.pass = out.worst <= tol;
  return out;
}

// Log-probability of a token sequence by direct unrolling.
inline double oracle_sequence_logprob(const tlerc::Tensor& condition,
                                      const tlerc::ParameterSet& ps,
                                      const tlerc::DecoderParams& layout,
                                      const tlerc::TokenIds& tokens) {
  using namespace tlerc;
  Tape tape(false);
  DecoderVars p = bind(tape, ps, layout);
  Var state = decoder_initial_state(tape.constant(condition), p);
  std::size_t prev = kBos;
  double lp = 0.0;
  for (auto tok : tokens) {
    state = gru_step(ops::row(p.embedding, prev), state, p.gru);
    lp += log_softmax_values(decoder_logits(state, p).value().data())[tok];
    prev = tok;
  }
  return lp;
}

// Best sequence that either ends with EOS within max_len or has exactly
// max_len tokens.
inline std::pair<tlerc::TokenIds, double> exhaustive_best(const tlerc::Tensor& condition,
                                                         const tlerc::ParameterSet& ps,
                                                         const tlerc::DecoderParams& layout,
                                                         std::size_t max_len) {
  using namespace tlerc;
  TokenIds best;
  double best_lp = -INFINITY;
  TokenIds cur;
  std::function<void()> rec = [&] {
    const bool complete = cur.size() == max_len || (!cur.empty() && cur.back() == kEos);
    if (complete) {
      const double lp = oracle_sequence_logprob(condition, ps, layout, cur);
      if (lp > best_lp) {
        best_lp = lp;
        best = cur;
      }
      return;
    }
    for (std::size_t t = 0; t < layout.vocab_size; ++t) {
      cur.push_back(t);
      rec();
      cur.pop_back();
    }
  };
  rec();
  return {best, best_lp};
}

using Labels = std::vector<std::string>;

// Confusion matrix first, then per-class scores read off rows and columns.
inline double oracle_weighted_f(const Labels& gold, const Labels& pred,
                                const std::set<std::string>& ex) {
  std::map<std::string, std::map<std::string, int>> cm;
  std::set<std::string> classes;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (ex.contains(gold[i])) continue;
    cm[gold[i]][pred[i]]++;
    classes.insert(gold[i]);
  }
  int total = 0;
  for (auto& [g, row] : cm)
    for (auto& [p, n] : row) total += n;
  double out = 0;
  for (const auto& c : classes) {
    int tp = cm[c][c], row = 0, col = 0;
    for (auto& [p, n] : cm[c]) row += n;
    for (auto& [g, r] : cm)
      if (r.contains(c)) col += r.at(c);
    const double prec = col ? double(tp) / col : 0.0;
    const double rec = row ? double(tp) / row : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    out += double(row) / total * f;
  }
  return out;
}

inline double oracle_micro_f(const Labels& gold, const Labels& pred,
                             const std::set<std::string>& ex) {
  int tp = 0, npred = 0, ngold = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!ex.contains(pred[i])) ++npred;
    if (!ex.contains(gold[i])) ++ngold;
    if (!ex.contains(gold[i]) && gold[i] == pred[i]) ++tp;
  }
  const double p = npred ? double(tp) / npred : 0.0, r = ngold ? double(tp) / ngold : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

// Two-tailed exact p from all C(n, na) placements of the first sample's ranks.
inline double oracle_exact_p(std::size_t na, std::size_t nb, double u_obs) {
  const std::size_t n = na + nb;
  double mean = na * nb / 2.0;
  long count = 0, extreme = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
    double rs = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (mask >> k & 1u) rs += static_cast<double>(k + 1);
    const double u = rs - na * (na + 1) / 2.0;
    ++count;
    if (std::abs(u - mean) >= std::abs(u_obs - mean) - 1e-9) ++extreme;
  }
  return std::min(1.0, double(extreme) / count);
}

}  // namespace testing
