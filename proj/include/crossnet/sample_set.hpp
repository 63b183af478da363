#pragma once

#include <optional>
#include <vector>

#include "crossnet/types.hpp"

namespace crossnet {

// Covariates, binary treatment flags and observed outcomes, with optional
// ground truth when the data-generating process is known.
struct SampleSet {
  Matrix x;
  Eigen::VectorXi t;
  Vector y;
  std::optional<Vector> mu0;
  std::optional<Vector> mu1;
  std::optional<Vector> cate;
  std::optional<Vector> propensity;
  std::optional<Eigen::VectorXi> randomized;  // Jobs only: 1 = experimental sample

  Index size() const { return x.rows(); }
  Index n_treated() const { return t.sum(); }
  Index n_control() const { return size() - n_treated(); }

  // Checks shape agreement, t in {0,1}, cate == mu1 - mu0 and propensities in (0,1).
  void validate() const;

  SampleSet subset(const std::vector<Index>& rows) const;
  // Row indices with t == arm (1 treated, 0 control), in ascending order.
  std::vector<Index> group(int arm) const;
};

// Rows of `b` appended below the rows of `a`. Optional fields survive only
// when present in both.
SampleSet concat(const SampleSet& a, const SampleSet& b);

}  // namespace crossnet
