#include "crossnet/evalx.hpp"

#include <cmath>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet::evalx {

namespace {

void require_pair(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) throw InvalidArgument(std::string(what) + ": length mismatch");
  if (a.size() == 0) throw InvalidArgument(std::string(what) + ": empty input");
}

}  // namespace

double pehe(const Vector& tau_hat, const Vector& tau_true) {
  require_pair(tau_hat, tau_true, "pehe");
  return std::sqrt((tau_hat - tau_true).squaredNorm() / static_cast<double>(tau_hat.size()));
}

double abs_ate_error(const Vector& tau_hat, const Vector& tau_true) {
  require_pair(tau_hat, tau_true, "abs_ate_error");
  return std::abs(tau_hat.mean() - tau_true.mean());
}

double policy_risk(const Vector& tau_hat, const Vector& y, const Eigen::VectorXi& t,
                   const Eigen::VectorXi& randomized, const PolicySpec& spec) {
  const Index n = tau_hat.size();
  if (y.size() != n || t.size() != n || randomized.size() != n) {
    throw InvalidArgument("policy_risk: length mismatch");
  }
  double treat_sum = 0.0, control_sum = 0.0;
  Index treat_count = 0, control_count = 0;  // agreement cells
  Index policy_treat = 0, total = 0;
  for (Index i = 0; i < n; ++i) {
    if (randomized[i] != 1) continue;
    ++total;
    const bool treat = tau_hat[i] > spec.threshold;
    if (treat) ++policy_treat;
    if (treat && t[i] == 1) {
      treat_sum += y[i];
      ++treat_count;
    } else if (!treat && t[i] == 0) {
      control_sum += y[i];
      ++control_count;
    }
  }
  if (total == 0) throw UndefinedCell("randomized subset");
  const double p_treat = static_cast<double>(policy_treat) / static_cast<double>(total);
  const double p_control = 1.0 - p_treat;
  double value = 0.0;
  if (p_treat > 0.0) {
    if (treat_count == 0) throw UndefinedCell("E[Y1 | policy=1]");
    value += treat_sum / static_cast<double>(treat_count) * p_treat;
  }
  if (p_control > 0.0) {
    if (control_count == 0) throw UndefinedCell("E[Y0 | policy=0]");
    value += control_sum / static_cast<double>(control_count) * p_control;
  }
  return 1.0 - value;
}

}  // namespace crossnet::evalx
