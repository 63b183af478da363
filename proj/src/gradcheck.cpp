#include "crossnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet::grad {

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& params,
                        double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  Vector probe = params;
  Vector out(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    const double up = f(probe);
    probe[i] = params[i] - step;
    const double down = f(probe);
    probe[i] = params[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalAbort("finite_diff_grad: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

GradReport grad_check(const Vector& analytic, const Vector& numeric, double rel_tol,
                      double abs_floor) {
  if (analytic.size() != numeric.size()) {
    throw InvalidArgument("grad_check: gradient lengths differ");
  }
  GradReport report;
  report.n_params = static_cast<std::size_t>(analytic.size());
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::abs(a - n);
    const double denom = std::max({std::abs(a), std::abs(n), abs_floor});
    const double rel = denom > 0.0 ? abs_err / denom : 0.0;
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    if (rel > report.max_rel_err || !std::isfinite(rel)) {
      report.max_rel_err = rel;
      report.worst_param_index = static_cast<std::size_t>(i);
    }
  }
  report.passed = std::isfinite(report.max_rel_err) && report.max_rel_err <= rel_tol;
  return report;
}

}  // namespace crossnet::grad
