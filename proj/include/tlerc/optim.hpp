#pragma once

#include <map>
#include <string>
#include <vector>

#include "tlerc/params.hpp"

namespace tlerc {

enum class OptimizerKind { adam, rmsprop };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected) or RMSprop
// (decay 0.9, eps 1e-8). State is created lazily per trainable parameter;
// frozen parameters never get state.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(ParameterSet& params, const GradientMap& grads, const FreezeMask& frozen = {});

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }
  long steps() const { return steps_; }
  bool has_state(const std::string& name) const { return first_.contains(name); }
  std::size_t state_size() const { return first_.size(); }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kRmsDecay = 0.9;
  static constexpr double kEps = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  long steps_ = 0;
  std::map<std::string, std::vector<double>> first_;   // Adam m / RMSprop mean square
  std::map<std::string, std::vector<double>> second_;  // Adam v
};

}  // namespace tlerc
