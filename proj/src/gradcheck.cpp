#include "tlerc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tlerc {

GradCheckReport finite_difference_check(const LossFn& f, const ParameterSet& params,
                                        double eps, double rel_tol) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ContractError("finite_difference_check: eps must lie in [1e-7, 1e-3]");

  GradientMap analytic;
  {
    Tape tape;
    analytic = tape.backward(f(tape, params));
  }

  auto evaluate = [&](const ParameterSet& p) {
    Tape tape(false);
    return f(tape, p).item();
  };

  GradCheckReport report;
  ParameterSet probe = params;
  for (const auto& [name, value] : params) {
    const Tensor* grad = nullptr;
    if (auto it = analytic.find(name); it != analytic.end()) grad = &it->second;
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = value[i];
      slot[i] = original + eps;
      const double up = evaluate(probe);
      slot[i] = original - eps;
      const double down = evaluate(probe);
      slot[i] = original;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad ? (*grad)[i] : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (report.worst_name.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_name = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error <= rel_tol;
  return report;
}

}  // namespace tlerc
