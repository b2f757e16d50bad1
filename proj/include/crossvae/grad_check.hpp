#pragma once

#include "crossvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

namespace crossvae {

/// One differentiable input of the function under test: the values the
/// checker perturbs in place, and the analytic gradient to compare against.
struct GradCheckTarget {
  std::string name;
  Vec<double>* values;
  Vec<double> analytic;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_target;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients of the scalar `loss` against central
/// differences. `loss` may evaluate in extended precision; the difference is
/// taken before rounding back to double. The relative error per element is
/// |g_a - g_n| / max(1e-8, |g_a| + |g_n|); the maximum over all elements of
/// all targets is returned. Values are restored after each probe.
inline GradCheckResult grad_check(const std::function<long double()>& loss,
                                  std::span<GradCheckTarget> targets, double eps = 1e-5) {
  GradCheckResult result;
  for (auto& t : targets) {
    if (t.analytic.size() != t.values->size()) {
      throw ShapeError("grad_check: analytic gradient for '" + t.name + "' has " +
                       std::to_string(t.analytic.size()) + " elements, values have " +
                       std::to_string(t.values->size()));
    }
    for (Index i = 0; i < t.values->size(); ++i) {
      const double ga = t.analytic[i];
      if (!std::isfinite(ga)) {
        throw NumericError("grad_check: non-finite analytic gradient for '" + t.name +
                           "' at element " + std::to_string(i));
      }
      double& v = (*t.values)[i];
      const double saved = v;
      v = saved + eps;
      const long double up = loss();
      v = saved - eps;
      const long double down = loss();
      v = saved;
      const double gn = static_cast<double>((up - down) / (2.0L * eps));
      if (!std::isfinite(gn)) {
        throw NumericError("grad_check: non-finite numeric gradient for '" + t.name +
                           "' at element " + std::to_string(i));
      }
      const double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
      if (result.worst_index < 0 || rel > result.max_relative_error) {
        result = {rel, t.name, i, ga, gn};
      }
    }
  }
  return result;
}

}  // namespace crossvae
