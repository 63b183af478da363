#pragma once

#include "crossnet/types.hpp"

namespace crossnet::evalx {

// Precision in the estimation of heterogeneous effects: RMS of tau_hat - tau.
double pehe(const Vector& tau_hat, const Vector& tau_true);

// |mean(tau_hat) - mean(tau_true)|
double abs_ate_error(const Vector& tau_hat, const Vector& tau_true);

struct PolicySpec {
  // Treat iff the predicted effect exceeds the threshold.
  double threshold = 0.0;
};

// Policy risk of the rule "treat iff tau_hat > threshold", estimated on rows
// with randomized == 1:
//   R = 1 - (E[y | t=1, treat] P(treat) + E[y | t=0, no treat] P(no treat)).
// `y` must be coded with 1 as the favorable outcome. Throws UndefinedCell when
// a conditional mean that carries positive policy mass has no rows.
double policy_risk(const Vector& tau_hat, const Vector& y, const Eigen::VectorXi& t,
                   const Eigen::VectorXi& randomized, const PolicySpec& spec = {});

}  // namespace crossnet::evalx
