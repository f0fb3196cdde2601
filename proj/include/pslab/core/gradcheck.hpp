#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pslab/core/param_set.hpp"

namespace pslab {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t coordinates = 0;
};

/// Relative error with a small absolute floor, so coordinates whose true
/// gradient is ~0 are judged by absolute agreement.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares the gradients stored in `params` against fourth-order central
/// differences of `loss`, which must evaluate the objective without a tape.
inline GradCheckResult check_gradients(ParamSet<double>& params, const std::function<double()>& loss,
                                       double step = 1e-3) {
  GradCheckResult result;
  for (auto& e : params.entries()) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) {
      double& w = e.value.data()[i];
      const double saved = w;
      auto at = [&](double offset) {
        w = saved + offset;
        return loss();
      };
      const double numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      w = saved;
      const double analytic = e.grad.data()[i];
      const double rel = relative_error(analytic, numeric);
      ++result.coordinates;
      result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic - numeric));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = e.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace pslab
