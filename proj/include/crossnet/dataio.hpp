#pragma once

// Dataset loading, standardization, splitting and result persistence.
//
// CSV schemas (comma separated, one header line, no quoting):
//   IHDP replication k: ihdp_train_<k>.csv / ihdp_test_<k>.csv
//     t,y_factual,y_cfactual,mu0,mu1,x1..x25
//   Jobs: t,y,e,x1..x17        (y = 1 means unemployed, e = 1 randomized)
//   Synthetic samples: t,y,mu0,mu1,cate,propensity,x1..xd
//   Results: method,dataset,rep,seed,pehe_in,pehe_out,policy_risk_in,
//            policy_risk_out,ate_err,wall_seconds,config_hash
//     (a missing metric is an empty field)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossnet/sample_set.hpp"

namespace crossnet::dataio {

inline constexpr Index kIhdpCovariates = 25;
inline constexpr Index kIhdpUnits = 747;
inline constexpr Index kIhdpTreated = 139;
inline constexpr Index kJobsCovariates = 17;

// Per-column affine standardization fitted on training rows. Columns whose
// training values are all in {0, 1} are treated as binary and left untouched.
struct Standardizer {
  Vector mean;
  Vector scale;
  std::vector<bool> binary;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

struct IhdpReplication {
  SampleSet train;
  SampleSet test;
};

// Loads replication `k` (1-based). Covariates are standardized with the
// statistics of the train file.
IhdpReplication load_ihdp(const std::filesystem::path& dir, int k);

// Loads the Jobs file and standardizes its continuous covariates. Soft schema
// issues (treated rows outside the randomized sample) are appended to
// `warnings` when given.
SampleSet load_jobs(const std::filesystem::path& path,
                    std::vector<std::string>* warnings = nullptr);

void write_ihdp_csv(const std::filesystem::path& path, const SampleSet& s,
                    const Vector& y_cfactual);
void write_jobs_csv(const std::filesystem::path& path, const SampleSet& s);
void write_sample_csv(const std::filesystem::path& path, const SampleSet& s);
SampleSet read_sample_csv(const std::filesystem::path& path);

struct SplitSpec {
  double train_frac = 0.63;
  double val_frac = 0.27;
  double test_frac = 0.10;
  bool stratify_by_t = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

// Disjoint, exhaustive index split; deterministic per seed. With
// stratify_by_t every part receives its share of both groups.
Split split_indices(const SampleSet& data, const SplitSpec& spec);

struct SplitData {
  SampleSet train;
  SampleSet val;
  SampleSet test;
};
SplitData split(const SampleSet& data, const SplitSpec& spec);

struct RunResult {
  std::string method;
  std::string dataset;
  int rep = 0;
  std::uint64_t seed = 0;
  std::optional<double> pehe_in;
  std::optional<double> pehe_out;
  std::optional<double> policy_risk_in;
  std::optional<double> policy_risk_out;
  std::optional<double> ate_err;
  double wall_seconds = 0.0;
  std::string config_hash;

  // A row without any metric records a failed replication.
  bool failed() const;
  bool operator==(const RunResult&) const = default;
};

extern const char* const kResultsHeader;

void write_results(const std::vector<RunResult>& results, const std::filesystem::path& path);
void append_results(const std::vector<RunResult>& results, const std::filesystem::path& path);
std::vector<RunResult> read_results(const std::filesystem::path& path);

std::string format_result(const RunResult& r);

}  // namespace crossnet::dataio
