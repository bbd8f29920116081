#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "tlerc/params.hpp"
#include "tlerc/tape.hpp"

namespace tlerc {

// Builds a scalar loss on the given tape from the given parameters.
using LossFn = std::function<Var(Tape&, const ParameterSet&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  bool pass = true;
};

// Compares reverse-mode gradients against central differences
// (f(p + eps) - f(p - eps)) / (2 eps), coordinate by coordinate. The relative
// error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport finite_difference_check(const LossFn& f, const ParameterSet& params,
                                        double eps = 1e-5, double rel_tol = 1e-4);

}  // namespace tlerc
