#include "crossnet/sample_set.hpp"

#include <cmath>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet {

void SampleSet::validate() const {
  const Index n = x.rows();
  if (t.size() != n || y.size() != n) {
    throw InvalidArgument("SampleSet: x, t and y must have the same number of rows");
  }
  for (Index i = 0; i < n; ++i) {
    if (t[i] != 0 && t[i] != 1) throw InvalidArgument("SampleSet: treatment must be 0 or 1");
  }
  auto check_len = [n](const auto& opt, const char* name) {
    if (opt && opt->size() != n) {
      throw InvalidArgument(std::string("SampleSet: ") + name + " has the wrong length");
    }
  };
  check_len(mu0, "mu0");
  check_len(mu1, "mu1");
  check_len(cate, "cate");
  check_len(propensity, "propensity");
  check_len(randomized, "randomized flag");
  if (mu0 && mu1 && cate) {
    for (Index i = 0; i < n; ++i) {
      if ((*cate)[i] != (*mu1)[i] - (*mu0)[i]) {
        throw InvalidArgument("SampleSet: cate must equal mu1 - mu0");
      }
    }
  }
  if (propensity) {
    for (Index i = 0; i < n; ++i) {
      const double p = (*propensity)[i];
      if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("SampleSet: propensity outside (0,1)");
    }
  }
  if (randomized) {
    for (Index i = 0; i < n; ++i) {
      if ((*randomized)[i] != 0 && (*randomized)[i] != 1) {
        throw InvalidArgument("SampleSet: randomized flag must be 0 or 1");
      }
    }
  }
}

namespace {

template <typename V>
V take(const V& v, const std::vector<Index>& rows) {
  V out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = v[rows[k]];
  return out;
}

template <typename V>
std::optional<V> take(const std::optional<V>& v, const std::vector<Index>& rows) {
  if (!v) return std::nullopt;
  return take(*v, rows);
}

template <typename V>
V stack(const V& a, const V& b) {
  V out(a.size() + b.size());
  out << a, b;
  return out;
}

template <typename V>
std::optional<V> stack(const std::optional<V>& a, const std::optional<V>& b) {
  if (!a || !b) return std::nullopt;
  return stack(*a, *b);
}

}  // namespace

SampleSet SampleSet::subset(const std::vector<Index>& rows) const {
  SampleSet out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= size()) throw InvalidArgument("SampleSet::subset: bad row");
    out.x.row(static_cast<Index>(k)) = x.row(rows[k]);
  }
  out.t = take(t, rows);
  out.y = take(y, rows);
  out.mu0 = take(mu0, rows);
  out.mu1 = take(mu1, rows);
  out.cate = take(cate, rows);
  out.propensity = take(propensity, rows);
  out.randomized = take(randomized, rows);
  return out;
}

std::vector<Index> SampleSet::group(int arm) const {
  std::vector<Index> rows;
  for (Index i = 0; i < t.size(); ++i) {
    if (t[i] == arm) rows.push_back(i);
  }
  return rows;
}

SampleSet concat(const SampleSet& a, const SampleSet& b) {
  if (a.x.cols() != b.x.cols()) throw InvalidArgument("concat: covariate widths differ");
  SampleSet out;
  out.x.resize(a.size() + b.size(), a.x.cols());
  out.x << a.x, b.x;
  out.t = stack(a.t, b.t);
  out.y = stack(a.y, b.y);
  out.mu0 = stack(a.mu0, b.mu0);
  out.mu1 = stack(a.mu1, b.mu1);
  out.cate = stack(a.cate, b.cate);
  out.propensity = stack(a.propensity, b.propensity);
  out.randomized = stack(a.randomized, b.randomized);
  return out;
}

}  // namespace crossnet
