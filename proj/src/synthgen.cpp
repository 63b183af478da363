#include "crossnet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SynthConfig::validate() const {
  if (n < 2) throw InvalidArgument("synthetic sample size must be at least 2");
  if (d_c < 1 || d_o < 0 || d_t < 0) throw InvalidArgument("block dimensions must be valid");
  const Index used = d_c + d_o + d_t + (setting == Setting::S2 ? kTauDim : 0);
  if (used > d) {
    throw InvalidArgument("covariate blocks need " + std::to_string(used) +
                          " dimensions but d = " + std::to_string(d));
  }
  if (!std::isfinite(xi)) throw InvalidArgument("xi must be finite");
  if (!(noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be nonnegative");
}

SampleSet simulate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const Index n = cfg.n;
  SampleSet s;
  s.x.resize(n, cfg.d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < cfg.d; ++j) s.x(i, j) = normal(rng);
  }

  const Index tau_begin = cfg.d_c + cfg.d_o + cfg.d_t;
  Vector mu0(n), mu1(n), score(n);
  for (Index i = 0; i < n; ++i) {
    mu0[i] = s.x.row(i).head(cfg.d_c + cfg.d_o).squaredNorm();
    score[i] = s.x.row(i).head(cfg.d_c).squaredNorm() / static_cast<double>(cfg.d_c);
    mu1[i] = mu0[i];
    if (cfg.setting == Setting::S2) mu1[i] += s.x.row(i).segment(tau_begin, kTauDim).squaredNorm();
  }
  const double omega = median(std::vector<double>(score.data(), score.data() + n));

  Vector propensity(n);
  s.t.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-cfg.xi * (score[i] - omega)));
    propensity[i] = std::clamp(p, 1e-15, 1.0 - 1e-15);
    s.t[i] = uniform(rng) < propensity[i] ? 1 : 0;
  }
  s.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = s.t[i] == 1 ? mu1[i] : mu0[i];
    s.y[i] = mu + cfg.noise_sd * normal(rng);
  }
  s.cate = (mu1 - mu0).eval();
  s.mu0 = std::move(mu0);
  s.mu1 = std::move(mu1);
  s.propensity = std::move(propensity);
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed_base, std::uint64_t size, std::uint64_t rep,
                          std::uint64_t stream) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(size) ^ rep) ^ (stream + 1));
  return seed_base ^ h;
}

std::vector<SuiteEntry> make_benchmark_suite(const SynthConfig& base,
                                             const std::vector<Index>& sizes, Index n_test,
                                             int reps) {
  if (sizes.empty()) throw InvalidArgument("benchmark suite needs at least one size");
  if (reps < 1) throw InvalidArgument("benchmark suite needs at least one replication");
  std::vector<SuiteEntry> suite;
  for (Index size : sizes) {
    for (int rep = 0; rep < reps; ++rep) {
      SuiteEntry e;
      e.size = size;
      e.rep = rep;
      e.train_seed = derive_seed(base.seed, static_cast<std::uint64_t>(size),
                                 static_cast<std::uint64_t>(rep), 0);
      e.test_seed = derive_seed(base.seed, static_cast<std::uint64_t>(size),
                                static_cast<std::uint64_t>(rep), 1);
      SynthConfig train_cfg = base;
      train_cfg.n = size;
      train_cfg.seed = e.train_seed;
      SynthConfig test_cfg = base;
      test_cfg.n = n_test;
      test_cfg.seed = e.test_seed;
      e.train = simulate(train_cfg);
      e.test = simulate(test_cfg);
      suite.push_back(std::move(e));
    }
  }
  return suite;
}

}  // namespace crossnet::synth
