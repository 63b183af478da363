#pragma once

// Experiment harness behind the `crossnet` command-line tool.
//
// Configuration is flat `key=value` text ('#' starts a comment). Recognised
// keys are listed in README.md; unknown keys are a configuration error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "crossnet/dataio.hpp"
#include "crossnet/gradcheck.hpp"
#include "crossnet/synthgen.hpp"
#include "crossnet/trainer.hpp"

namespace crossnet::bench {

enum class Experiment { Synthetic, Ihdp, Jobs, Gradcheck };

std::string to_string(Experiment e);

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitGradcheck = 5;

struct GradcheckSettings {
  Index n = 16;
  Index d = 5;
  Index rep_dim = 4;
  Index head_width = 8;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Test hook: perturb one analytic gradient entry before comparing.
  bool corrupt = false;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Synthetic;
  std::vector<train::ModelKind> methods = {train::ModelKind::CrossNet, train::ModelKind::TNet,
                                           train::ModelKind::TARNet, train::ModelKind::CFRNet};
  train::TrainConfig train;
  synth::SynthConfig synth;
  std::vector<Index> sizes = {500, 1000, 2000, 5000};
  Index n_test = 1000;
  int rep_first = 1;
  int rep_last = 10;
  std::filesystem::path data_dir;
  std::filesystem::path jobs_file;
  std::filesystem::path out;
  int parallel = 1;
  double policy_threshold = 0.0;
  dataio::SplitSpec split;
  std::uint64_t seed = 0;
  GradcheckSettings gradcheck;

  int reps() const { return rep_last - rep_first + 1; }
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

// Applies `kv` on top of `base`; throws ConfigError on unknown keys or bad values.
ExperimentConfig apply(ExperimentConfig base, const KeyValues& kv);
// Defaults appropriate for the experiment named in kv (if any), then kv.
ExperimentConfig make_config(const KeyValues& kv);

// Canonical text form of a training configuration and its 16-hex-digit
// FNV-1a fingerprint.
std::string serialize(const train::TrainConfig& cfg);
std::string config_hash(const train::TrainConfig& cfg, const std::string& extra = {});

// The training configuration used for `method`.
train::TrainConfig method_config(const ExperimentConfig& cfg, train::ModelKind method);

struct GenOutput {
  std::vector<std::filesystem::path> files;
  std::filesystem::path manifest;
};
GenOutput cmd_gen(const ExperimentConfig& cfg, std::ostream& log);

// One replication of one method. Never throws for training failures: the
// returned row then carries no metrics and `error` describes the failure.
struct JobOutcome {
  dataio::RunResult result;
  std::string error;
  int exit_code = kExitOk;
};

std::vector<JobOutcome> run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// Runs the experiment, writes results to cfg.out (appending) and returns the
// process exit code.
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);

struct MetricSummary {
  int count = 0;
  std::optional<double> mean;
  std::optional<double> se;
};

struct ReportRow {
  std::string method;
  std::string dataset;
  int rows = 0;
  int failures = 0;
  MetricSummary pehe_in, pehe_out, policy_risk_in, policy_risk_out, ate_err;
};

// Groups by (method, dataset) in order of first appearance. Standard error is
// the sample standard deviation over sqrt(count) and is absent for count < 2.
// Throws ConfigError on mixed fingerprints within a group unless `force`.
std::vector<ReportRow> summarize(const std::vector<dataio::RunResult>& rows, bool force);

int cmd_report(const std::filesystem::path& results, const std::filesystem::path& out, bool force,
               std::ostream& log);

struct GradcheckOutcome {
  grad::GradReport report;
  train::LossParts parts;
};
GradcheckOutcome run_gradcheck(const ExperimentConfig& cfg);
int cmd_gradcheck(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace crossnet::bench
