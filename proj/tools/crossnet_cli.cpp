// crossnet: command-line harness for the CATE benchmarks.
//
//   crossnet gen       --config cfg.txt --out data/
//   crossnet train     --config cfg.txt --out results.csv [--parallel 4]
//   crossnet report    results.csv [--out summary.csv] [--force]
//   crossnet gradcheck [--config cfg.txt]
//
// Any `key=value` positional argument overrides the config file.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossnet/bench.hpp"
#include "crossnet/errors.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string methods;
  std::string data_dir;
  long long seed = -1;
  int reps = 0;
  int parallel = 0;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value configuration file");
  cmd->add_option("--out", f.out, "output path");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--reps", f.reps, "number of replications (1..reps)");
  cmd->add_option("--methods", f.methods, "comma-separated methods");
  cmd->add_option("--parallel", f.parallel, "concurrent replications");
  cmd->add_option("--data-dir", f.data_dir, "directory holding IHDP/Jobs CSV files");
  cmd->add_option("overrides", f.overrides, "key=value overrides");
}

crossnet::bench::ExperimentConfig resolve(const CommonFlags& f, const std::string& experiment) {
  using crossnet::bench::KeyValues;
  KeyValues kv;
  if (!f.config.empty()) kv = crossnet::bench::read_key_values(f.config);
  for (const auto& o : f.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw crossnet::ConfigError("override '" + o + "' is not key=value");
    }
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  if (!experiment.empty()) kv["experiment"] = experiment;
  if (!f.out.empty()) kv["out"] = f.out;
  if (f.seed >= 0) kv["seed"] = std::to_string(f.seed);
  if (f.reps > 0) {
    kv.erase("rep_first");
    kv.erase("rep_last");
    kv["reps"] = std::to_string(f.reps);
  }
  if (!f.methods.empty()) kv["methods"] = f.methods;
  if (f.parallel > 0) kv["parallel"] = std::to_string(f.parallel);
  if (!f.data_dir.empty()) kv["data_dir"] = f.data_dir;
  return crossnet::bench::make_config(kv);
}

}  // namespace

int main(int argc, char** argv) {
  namespace b = crossnet::bench;
  CLI::App app{"CATE estimation with cross-group correntropy regularization"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, grad_flags;
  auto* gen = app.add_subcommand("gen", "write synthetic train/test CSV files");
  add_common(gen, gen_flags);
  auto* trn = app.add_subcommand("train", "train and evaluate methods, appending result rows");
  add_common(trn, train_flags);
  auto* grd = app.add_subcommand("gradcheck", "finite-difference check of the CrossNet gradient");
  add_common(grd, grad_flags);

  std::string report_in, report_out;
  bool force = false;
  auto* rep = app.add_subcommand("report", "aggregate a results CSV");
  rep->add_option("results", report_in, "results CSV")->required();
  rep->add_option("--out", report_out, "summary CSV");
  rep->add_flag("--force", force, "aggregate rows with mixed config fingerprints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : b::kExitConfig;
  }

  try {
    if (*gen) {
      b::cmd_gen(resolve(gen_flags, "synthetic"), std::cout);
      return b::kExitOk;
    }
    if (*trn) return b::cmd_train(resolve(train_flags, ""), std::cout);
    if (*grd) return b::cmd_gradcheck(resolve(grad_flags, "gradcheck"), std::cout);
    if (*rep) return b::cmd_report(report_in, report_out, force, std::cout);
  } catch (const crossnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return b::kExitConfig;
  } catch (const crossnet::FormatError& e) {
    std::cerr << "data format error: " << e.what() << "\n";
    return b::kExitData;
  } catch (const crossnet::NotFound& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return b::kExitData;
  } catch (const crossnet::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return b::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return b::kExitFailure;
  }
  return b::kExitOk;
}
