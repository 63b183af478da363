#pragma once

#include <cstddef>
#include <functional>

#include "crossnet/types.hpp"

namespace crossnet::grad {

struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst_param_index = 0;
  std::size_t n_params = 0;
  bool passed = true;
};

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h per coordinate.
// Throws NumericalAbort if f returns a non-finite value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& params,
                        double step);

// Per-coordinate relative error |a - n| / max(|a|, |n|, abs_floor).
GradReport grad_check(const Vector& analytic, const Vector& numeric, double rel_tol,
                      double abs_floor);

}  // namespace crossnet::grad
