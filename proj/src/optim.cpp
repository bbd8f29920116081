#include "tlerc/optim.hpp"

#include <cmath>

namespace tlerc {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "rmsprop";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam" || name == "Adam") return OptimizerKind::adam;
  if (name == "rmsprop" || name == "RMSprop") return OptimizerKind::rmsprop;
  throw FormatError("unknown optimizer '" + name + "' (expected adam or rmsprop)");
}

void Optimizer::step(ParameterSet& params, const GradientMap& grads, const FreezeMask& frozen) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + name);
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);

  for (const auto& [name, g] : grads) {
    if (frozen.contains(name)) continue;
    Tensor& p = params.at(name);
    if (p.shape() != g.shape())
      throw ShapeError("gradient for " + name + " has shape " + shape_str(g.shape()) +
                       ", parameter has " + shape_str(p.shape()));
    auto& m = first_[name];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (kind_ == OptimizerKind::adam) {
      auto& v = second_[name];
      if (v.empty()) v.assign(p.size(), 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kRmsDecay * m[i] + (1.0 - kRmsDecay) * g[i] * g[i];
        p[i] -= lr_ * g[i] / (std::sqrt(m[i]) + kEps);
      }
    }
  }
}

}  // namespace tlerc
