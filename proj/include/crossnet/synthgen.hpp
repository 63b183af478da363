#pragma once

// Synthetic data-generating processes with known potential outcomes.
//
// Covariates are i.i.d. standard normal, laid out as
//   [X_c (confounders) | X_o (outcome-only) | X_t (treatment-only) | rest].
//   mu0(x) = sum of squares over X_c and X_o
//   pi(x)  = expit(xi * (mean of squares over X_c - omega)), omega the sample
//            median of that mean, so propensities are centered
//   S1: mu1 = mu0;  S2: mu1 = mu0 + sum of squares over X_tau, the 5
//   coordinates following X_t.
//   y = mu_t + Normal(0, noise_sd^2)

#include <cstdint>
#include <vector>

#include "crossnet/sample_set.hpp"

namespace crossnet::synth {

enum class Setting { S1, S2 };

inline constexpr Index kTauDim = 5;

struct SynthConfig {
  Setting setting = Setting::S1;
  Index n = 500;
  Index d = 25;
  Index d_c = 5;
  Index d_o = 5;
  Index d_t = 5;
  double xi = 3.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

SampleSet simulate(const SynthConfig& cfg);

struct SuiteEntry {
  Index size = 0;
  int rep = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t test_seed = 0;
  SampleSet train;
  SampleSet test;
};

// One (train, test) pair per (size, rep). Train and test are independent
// draws from the same process; the test omega is recomputed on the test
// sample.
std::vector<SuiteEntry> make_benchmark_suite(const SynthConfig& base,
                                             const std::vector<Index>& sizes, Index n_test,
                                             int reps);

// seed_base xor a mix of (size, rep, stream). stream 0 = train, 1 = test.
std::uint64_t derive_seed(std::uint64_t seed_base, std::uint64_t size, std::uint64_t rep,
                          std::uint64_t stream);

}  // namespace crossnet::synth
