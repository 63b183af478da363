#include "crossnet/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "crossnet/errors.hpp"
#include "crossnet/evalx.hpp"

namespace crossnet::bench {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string l = lower(v);
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<Index> to_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  for (const auto& s : split_list(v)) {
    const long long w = to_int(key, s);
    if (w < 1) throw ConfigError(key + ": widths must be positive");
    out.push_back(static_cast<Index>(w));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string setting_name(synth::Setting s) { return s == synth::Setting::S1 ? "S1" : "S2"; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Benchmark-scale defaults: a compact architecture keeps the pairwise
// correntropy cost of each mini-batch manageable on one core.
void set_benchmark_defaults(ExperimentConfig& c) {
  c.train.net.rep_layers = {48, 8};
  c.train.net.head_layers = {24, 24};
  c.train.batch_size = 128;
  c.train.max_epochs = 300;
  c.train.patience = 10;
  c.train.lambda = 1.0;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Synthetic: return "synthetic";
    case Experiment::Ihdp: return "ihdp";
    case Experiment::Jobs: return "jobs";
    case Experiment::Gradcheck: return "gradcheck";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods: at least one method is required");
  if (rep_first < 1 || rep_last < rep_first) {
    throw ConfigError("replication range is empty (rep_first=" + std::to_string(rep_first) +
                      ", rep_last=" + std::to_string(rep_last) + ")");
  }
  if (parallel < 1) throw ConfigError("parallel must be at least 1");
  if (experiment == Experiment::Synthetic && sizes.empty()) {
    throw ConfigError("sizes: at least one sample size is required");
  }
  if (n_test < 1) throw ConfigError("n_test must be positive");
  if (!std::isfinite(policy_threshold)) throw ConfigError("policy_threshold must be finite");
  try {
    train.validate();
    synth.validate();
    split.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  } catch (const InvalidSplit& e) {
    throw ConfigError(e.what());
  }
  if (experiment == Experiment::Gradcheck) {
    if (gradcheck.n < 4 || gradcheck.d < 1 || gradcheck.rep_dim < 1 || gradcheck.head_width < 1) {
      throw ConfigError("gradcheck: model and sample dimensions must be positive (n >= 4)");
    }
    if (!(gradcheck.step > 0.0) || !(gradcheck.tolerance > 0.0)) {
      throw ConfigError("gradcheck: step and tolerance must be positive");
    }
  }
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_key_values(in);
}

ExperimentConfig apply(ExperimentConfig c, const KeyValues& kv) {
  using train::ModelKind;
  for (const auto& [key, v] : kv) {
    if (key == "experiment") {
      const std::string e = lower(v);
      if (e == "synthetic") c.experiment = Experiment::Synthetic;
      else if (e == "ihdp") c.experiment = Experiment::Ihdp;
      else if (e == "jobs") c.experiment = Experiment::Jobs;
      else if (e == "gradcheck") c.experiment = Experiment::Gradcheck;
      else throw ConfigError("experiment: unknown value '" + v + "'");
    } else if (key == "methods") {
      c.methods.clear();
      for (const auto& m : split_list(v)) {
        try {
          c.methods.push_back(train::model_kind_from_string(m));
        } catch (const InvalidArgument& e) {
          throw ConfigError(std::string("methods: ") + e.what());
        }
      }
    } else if (key == "seed") {
      c.seed = to_u64(key, v);
    } else if (key == "reps") {
      c.rep_first = 1;
      c.rep_last = static_cast<int>(to_int(key, v));
    } else if (key == "rep_first") {
      c.rep_first = static_cast<int>(to_int(key, v));
    } else if (key == "rep_last") {
      c.rep_last = static_cast<int>(to_int(key, v));
    } else if (key == "parallel") {
      c.parallel = static_cast<int>(to_int(key, v));
    } else if (key == "out") {
      c.out = v;
    } else if (key == "data_dir") {
      c.data_dir = v;
    } else if (key == "jobs_file") {
      c.jobs_file = v;
    } else if (key == "setting") {
      const std::string s = lower(v);
      if (s == "s1" || s == "i" || s == "1") c.synth.setting = synth::Setting::S1;
      else if (s == "s2" || s == "ii" || s == "2") c.synth.setting = synth::Setting::S2;
      else throw ConfigError("setting: expected S1 or S2");
    } else if (key == "sizes") {
      c.sizes = to_widths(key, v);
    } else if (key == "n_test") {
      c.n_test = static_cast<Index>(to_int(key, v));
    } else if (key == "d") {
      c.synth.d = static_cast<Index>(to_int(key, v));
    } else if (key == "d_c") {
      c.synth.d_c = static_cast<Index>(to_int(key, v));
    } else if (key == "d_o") {
      c.synth.d_o = static_cast<Index>(to_int(key, v));
    } else if (key == "d_t") {
      c.synth.d_t = static_cast<Index>(to_int(key, v));
    } else if (key == "xi") {
      c.synth.xi = to_double(key, v);
    } else if (key == "noise_sd") {
      c.synth.noise_sd = to_double(key, v);
    } else if (key == "lambda") {
      c.train.lambda = to_double(key, v);
    } else if (key == "lambda_grid") {
      c.train.lambda_grid.clear();
      for (const auto& s : split_list(v)) c.train.lambda_grid.push_back(to_double(key, s));
    } else if (key == "flavor") {
      const std::string f = lower(v);
      if (f == "logdet") c.train.divergence.flavor = matdiv::Flavor::LogDet;
      else if (f == "vonneumann" || f == "von_neumann") {
        c.train.divergence.flavor = matdiv::Flavor::VonNeumann;
      } else {
        throw ConfigError("flavor: expected logdet or vonneumann");
      }
    } else if (key == "sigma") {
      c.train.divergence.sigma = to_double(key, v);
    } else if (key == "sigma_mode") {
      const std::string m = lower(v);
      if (m == "fixed") c.train.sigma_mode = train::SigmaMode::Fixed;
      else if (m == "median") c.train.sigma_mode = train::SigmaMode::Median;
      else throw ConfigError("sigma_mode: expected fixed or median");
    } else if (key == "jitter") {
      c.train.divergence.jitter = to_double(key, v);
    } else if (key == "symmetrize") {
      c.train.divergence.symmetrize = to_bool(key, v);
    } else if (key == "cfr_alpha") {
      c.train.cfr_alpha = to_double(key, v);
    } else if (key == "loss") {
      const std::string l = lower(v);
      if (l == "mse") c.train.loss_kind = train::LossKind::Mse;
      else if (l == "bce") c.train.loss_kind = train::LossKind::Bce;
      else throw ConfigError("loss: expected mse or bce");
    } else if (key == "rep_layers") {
      c.train.net.rep_layers = to_widths(key, v);
    } else if (key == "head_layers") {
      c.train.net.head_layers = to_widths(key, v);
    } else if (key == "activation") {
      const std::string a = lower(v);
      if (a == "elu") c.train.net.activation = nets::Activation::ELU;
      else if (a == "relu") c.train.net.activation = nets::Activation::ReLU;
      else throw ConfigError("activation: expected elu or relu");
    } else if (key == "learning_rate") {
      c.train.learning_rate = to_double(key, v);
    } else if (key == "batch_size") {
      c.train.batch_size = static_cast<Index>(to_int(key, v));
    } else if (key == "max_epochs") {
      c.train.max_epochs = static_cast<int>(to_int(key, v));
    } else if (key == "patience") {
      c.train.patience = static_cast<int>(to_int(key, v));
    } else if (key == "val_fraction") {
      c.train.val_fraction = to_double(key, v);
    } else if (key == "min_group_per_batch") {
      c.train.min_group_per_batch = static_cast<Index>(to_int(key, v));
    } else if (key == "standardize_outcome") {
      c.train.standardize_outcome = to_bool(key, v);
    } else if (key == "full_sample_penalty") {
      c.train.full_sample_penalty = to_bool(key, v);
    } else if (key == "policy_threshold") {
      c.policy_threshold = to_double(key, v);
    } else if (key == "split") {
      const auto parts = split_list(v);
      if (parts.size() != 3) throw ConfigError("split: expected train,val,test fractions");
      c.split.train_frac = to_double(key, parts[0]);
      c.split.val_frac = to_double(key, parts[1]);
      c.split.test_frac = to_double(key, parts[2]);
    } else if (key == "gradcheck_n") {
      c.gradcheck.n = static_cast<Index>(to_int(key, v));
    } else if (key == "gradcheck_d") {
      c.gradcheck.d = static_cast<Index>(to_int(key, v));
    } else if (key == "gradcheck_rep_dim") {
      c.gradcheck.rep_dim = static_cast<Index>(to_int(key, v));
    } else if (key == "gradcheck_head_width") {
      c.gradcheck.head_width = static_cast<Index>(to_int(key, v));
    } else if (key == "gradcheck_step") {
      c.gradcheck.step = to_double(key, v);
    } else if (key == "gradcheck_tolerance") {
      c.gradcheck.tolerance = to_double(key, v);
    } else if (key == "gradcheck_corrupt") {
      c.gradcheck.corrupt = to_bool(key, v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return c;
}

ExperimentConfig make_config(const KeyValues& kv) {
  ExperimentConfig base;
  set_benchmark_defaults(base);
  if (auto it = kv.find("experiment"); it != kv.end()) {
    base = apply(base, {{"experiment", it->second}});
  }
  if (base.experiment == Experiment::Jobs) {
    base.train.loss_kind = train::LossKind::Bce;
  }
  if (base.experiment == Experiment::Gradcheck) {
    base.train.lambda = 1.0;
    base.train.divergence = matdiv::DivergenceConfig{};
    base.methods = {train::ModelKind::CrossNet};
  }
  return apply(base, kv);
}

std::string serialize(const train::TrainConfig& c) {
  std::ostringstream s;
  s << "model=" << train::to_string(c.model_kind) << ";lambda=" << fmt(c.lambda) << ";grid=";
  for (double l : c.lambda_grid) s << fmt(l) << ",";
  s << ";flavor=" << (c.divergence.flavor == matdiv::Flavor::LogDet ? "logdet" : "vonneumann")
    << ";sigma=" << fmt(c.divergence.sigma) << ";jitter=" << fmt(c.divergence.jitter)
    << ";sym=" << c.divergence.symmetrize
    << ";sigma_mode=" << (c.sigma_mode == train::SigmaMode::Fixed ? "fixed" : "median")
    << ";alpha=" << fmt(c.cfr_alpha)
    << ";loss=" << (c.loss_kind == train::LossKind::Mse ? "mse" : "bce")
    << ";rep=" << join(c.net.rep_layers) << ";head=" << join(c.net.head_layers)
    << ";act=" << (c.net.activation == nets::Activation::ELU ? "elu" : "relu")
    << ";lr=" << fmt(c.learning_rate) << ";bs=" << c.batch_size << ";epochs=" << c.max_epochs
    << ";patience=" << c.patience << ";val=" << fmt(c.val_fraction)
    << ";min_group=" << c.min_group_per_batch << ";std_y=" << c.standardize_outcome;
  return s.str();
}

std::string config_hash(const train::TrainConfig& cfg, const std::string& extra) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a(serialize(cfg) + "|" + extra);
  return s.str();
}

train::TrainConfig method_config(const ExperimentConfig& cfg, train::ModelKind method) {
  train::TrainConfig t = cfg.train;
  t.model_kind = method;
  if (method != train::ModelKind::CrossNet) t.lambda_grid.clear();
  return t;
}

GenOutput cmd_gen(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir = cfg.out.empty() ? fs::path("synthetic") : cfg.out;
  fs::create_directories(dir);
  synth::SynthConfig base = cfg.synth;
  base.seed = cfg.seed;
  GenOutput out;
  std::ostringstream manifest;
  manifest << "file,setting,size,rep,part,seed,rows\n";
  for (Index size : cfg.sizes) {
    for (int rep = cfg.rep_first; rep <= cfg.rep_last; ++rep) {
      for (int part = 0; part < 2; ++part) {
        synth::SynthConfig sc = base;
        sc.n = part == 0 ? size : cfg.n_test;
        sc.seed = synth::derive_seed(cfg.seed, static_cast<std::uint64_t>(size),
                                     static_cast<std::uint64_t>(rep),
                                     static_cast<std::uint64_t>(part));
        const SampleSet s = synth::simulate(sc);
        const std::string name = "synth_" + setting_name(sc.setting) + "_n" +
                                 std::to_string(size) + "_rep" + std::to_string(rep) +
                                 (part == 0 ? "_train" : "_test") + ".csv";
        dataio::write_sample_csv(dir / name, s);
        out.files.push_back(dir / name);
        manifest << name << "," << setting_name(sc.setting) << "," << size << "," << rep << ","
                 << (part == 0 ? "train" : "test") << "," << sc.seed << "," << s.size() << "\n";
      }
    }
  }
  out.manifest = dir / "manifest.csv";
  std::ofstream mf(out.manifest);
  if (!mf) throw Error("cannot write " + out.manifest.string());
  mf << manifest.str();
  log << manifest.str();
  return out;
}

namespace {

struct Job {
  train::ModelKind method;
  Index size = 0;  // synthetic only
  int rep = 0;
};

std::string dataset_id(const ExperimentConfig& cfg, Index size) {
  switch (cfg.experiment) {
    case Experiment::Synthetic:
      return "synthetic_" + setting_name(cfg.synth.setting) + "_n" + std::to_string(size);
    case Experiment::Ihdp: return "ihdp";
    case Experiment::Jobs: return "jobs";
    case Experiment::Gradcheck: return "gradcheck";
  }
  return "unknown";
}

std::string data_fingerprint(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << to_string(cfg.experiment) << ";seed=" << cfg.seed;
  if (cfg.experiment == Experiment::Synthetic) {
    s << ";setting=" << setting_name(cfg.synth.setting) << ";d=" << cfg.synth.d
      << ";dc=" << cfg.synth.d_c << ";do=" << cfg.synth.d_o << ";dt=" << cfg.synth.d_t
      << ";xi=" << fmt(cfg.synth.xi) << ";noise=" << fmt(cfg.synth.noise_sd)
      << ";n_test=" << cfg.n_test;
  }
  if (cfg.experiment == Experiment::Jobs) {
    s << ";split=" << fmt(cfg.split.train_frac) << "," << fmt(cfg.split.val_frac) << ","
      << fmt(cfg.split.test_frac) << ";policy=" << fmt(cfg.policy_threshold);
  }
  return s.str();
}

// Employment-oriented policy risk; nullopt when a policy cell is empty.
std::optional<double> jobs_policy_risk(const Vector& tau_unemployment, const SampleSet& s,
                                       double threshold) {
  const Vector tau_fav = -tau_unemployment;
  const Vector y_fav = (1.0 - s.y.array()).matrix();
  try {
    return evalx::policy_risk(tau_fav, y_fav, s.t, *s.randomized, evalx::PolicySpec{threshold});
  } catch (const UndefinedCell&) {
    return std::nullopt;
  }
}

dataio::RunResult run_job(const ExperimentConfig& cfg, const Job& job) {
  dataio::RunResult r;
  r.method = train::to_string(job.method);
  r.dataset = dataset_id(cfg, job.size);
  r.rep = job.rep;
  train::TrainConfig tc = method_config(cfg, job.method);
  tc.seed = synth::derive_seed(cfg.seed, static_cast<std::uint64_t>(job.size),
                               static_cast<std::uint64_t>(job.rep), 2);
  r.seed = tc.seed;
  r.config_hash = config_hash(tc, data_fingerprint(cfg));

  const auto start = std::chrono::steady_clock::now();
  switch (cfg.experiment) {
    case Experiment::Synthetic: {
      synth::SynthConfig sc = cfg.synth;
      sc.n = job.size;
      sc.seed = synth::derive_seed(cfg.seed, static_cast<std::uint64_t>(job.size),
                                   static_cast<std::uint64_t>(job.rep), 0);
      const SampleSet train_set = synth::simulate(sc);
      sc.n = cfg.n_test;
      sc.seed = synth::derive_seed(cfg.seed, static_cast<std::uint64_t>(job.size),
                                   static_cast<std::uint64_t>(job.rep), 1);
      const SampleSet test_set = synth::simulate(sc);
      const auto fit = train::train(train_set, tc);
      const Vector tau_in = train::predict_cate(fit.params, train_set.x);
      const Vector tau_out = train::predict_cate(fit.params, test_set.x);
      r.pehe_in = evalx::pehe(tau_in, *train_set.cate);
      r.pehe_out = evalx::pehe(tau_out, *test_set.cate);
      r.ate_err = evalx::abs_ate_error(tau_out, *test_set.cate);
      break;
    }
    case Experiment::Ihdp: {
      const auto rep = dataio::load_ihdp(cfg.data_dir, job.rep);
      const auto fit = train::train(rep.train, tc);
      const Vector tau_in = train::predict_cate(fit.params, rep.train.x);
      const Vector tau_out = train::predict_cate(fit.params, rep.test.x);
      r.pehe_in = evalx::pehe(tau_in, *rep.train.cate);
      r.pehe_out = evalx::pehe(tau_out, *rep.test.cate);
      r.ate_err = evalx::abs_ate_error(tau_out, *rep.test.cate);
      break;
    }
    case Experiment::Jobs: {
      const fs::path path = cfg.jobs_file.empty() ? cfg.data_dir / "jobs.csv" : cfg.jobs_file;
      const SampleSet data = dataio::load_jobs(path);
      dataio::SplitSpec spec = cfg.split;
      spec.seed = synth::derive_seed(cfg.seed, 0, static_cast<std::uint64_t>(job.rep), 3);
      const auto parts = dataio::split(data, spec);
      const auto fit = train::train(parts.train, parts.val, tc);
      const SampleSet within = concat(parts.train, parts.val);
      r.policy_risk_in = jobs_policy_risk(train::predict_cate(fit.params, within.x), within,
                                          cfg.policy_threshold);
      r.policy_risk_out = jobs_policy_risk(train::predict_cate(fit.params, parts.test.x),
                                           parts.test, cfg.policy_threshold);
      break;
    }
    case Experiment::Gradcheck:
      throw ConfigError("gradcheck is not a training experiment");
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

int exit_code_for(const std::exception_ptr& e, std::string& message) {
  try {
    std::rethrow_exception(e);
  } catch (const NumericalAbort& x) {
    message = x.what();
    return kExitNumerical;
  } catch (const NotFound& x) {
    message = x.what();
    return kExitData;
  } catch (const FormatError& x) {
    message = x.what();
    return kExitData;
  } catch (const ConfigError& x) {
    message = x.what();
    return kExitConfig;
  } catch (const std::exception& x) {
    message = x.what();
    return kExitFailure;
  }
}

}  // namespace

std::vector<JobOutcome> run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.experiment == Experiment::Gradcheck) {
    throw ConfigError("use the gradcheck subcommand for experiment=gradcheck");
  }
  if (cfg.experiment == Experiment::Ihdp && !fs::is_directory(cfg.data_dir)) {
    throw NotFound("IHDP data directory not found: '" + cfg.data_dir.string() + "'");
  }
  if (cfg.experiment == Experiment::Jobs) {
    const fs::path path = cfg.jobs_file.empty() ? cfg.data_dir / "jobs.csv" : cfg.jobs_file;
    if (!fs::exists(path)) throw NotFound("Jobs file not found: '" + path.string() + "'");
  }

  std::vector<Job> jobs;
  const std::vector<Index> sizes =
      cfg.experiment == Experiment::Synthetic ? cfg.sizes : std::vector<Index>{0};
  for (Index size : sizes) {
    for (int rep = cfg.rep_first; rep <= cfg.rep_last; ++rep) {
      for (auto m : cfg.methods) jobs.push_back(Job{m, size, rep});
    }
  }

  std::vector<JobOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      JobOutcome& o = outcomes[k];
      try {
        o.result = run_job(cfg, jobs[k]);
      } catch (...) {
        o.exit_code = exit_code_for(std::current_exception(), o.error);
        o.result = dataio::RunResult{};
        o.result.method = train::to_string(jobs[k].method);
        o.result.dataset = dataset_id(cfg, jobs[k].size);
        o.result.rep = jobs[k].rep;
        train::TrainConfig tc = method_config(cfg, jobs[k].method);
        o.result.seed = synth::derive_seed(cfg.seed, static_cast<std::uint64_t>(jobs[k].size),
                                           static_cast<std::uint64_t>(jobs[k].rep), 2);
        tc.seed = o.result.seed;
        o.result.config_hash = config_hash(tc, data_fingerprint(cfg));
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      const auto& r = o.result;
      log << r.method << " " << r.dataset << " rep " << r.rep;
      if (!o.error.empty()) {
        log << " FAILED: " << o.error << "\n";
      } else {
        if (r.pehe_out) log << " pehe_out=" << *r.pehe_out;
        if (r.policy_risk_out) log << " policy_risk_out=" << *r.policy_risk_out;
        log << " (" << std::fixed << std::setprecision(1) << r.wall_seconds << "s)\n";
        log.unsetf(std::ios::floatfield);
        log << std::setprecision(6);
      }
    }
  };
  const int n_threads = std::min<int>(cfg.parallel, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const auto outcomes = run_experiment(cfg, log);
  std::vector<dataio::RunResult> rows;
  int code = kExitOk;
  for (const auto& o : outcomes) {
    rows.push_back(o.result);
    if (code == kExitOk && o.exit_code != kExitOk) code = o.exit_code;
  }
  const fs::path out = cfg.out.empty() ? fs::path("results.csv") : cfg.out;
  dataio::append_results(rows, out);
  log << "wrote " << rows.size() << " rows to " << out.string() << "\n";
  return code;
}

std::vector<ReportRow> summarize(const std::vector<dataio::RunResult>& rows, bool force) {
  std::vector<ReportRow> out;
  std::vector<std::vector<const dataio::RunResult*>> members;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ReportRow& g) {
      return g.method == r.method && g.dataset == r.dataset;
    });
    if (it == out.end()) {
      ReportRow row;
      row.method = r.method;
      row.dataset = r.dataset;
      out.push_back(row);
      members.emplace_back();
      it = std::prev(out.end());
    }
    members[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& ms = members[g];
    for (const auto* r : ms) {
      if (r->config_hash != ms.front()->config_hash && !force) {
        throw ConfigError("mixed config fingerprints for " + out[g].method + "/" +
                          out[g].dataset + " (" + ms.front()->config_hash + " vs " +
                          r->config_hash + "); pass --force to aggregate anyway");
      }
    }
    out[g].rows = static_cast<int>(ms.size());
    for (const auto* r : ms) out[g].failures += r->failed() ? 1 : 0;
    auto stat = [&](auto field) {
      MetricSummary s;
      std::vector<double> v;
      for (const auto* r : ms) {
        if (const auto& x = r->*field) v.push_back(*x);
      }
      s.count = static_cast<int>(v.size());
      if (v.empty()) return s;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      s.mean = mean;
      if (v.size() >= 2) {
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
        s.se = sd / std::sqrt(static_cast<double>(v.size()));
      }
      return s;
    };
    out[g].pehe_in = stat(&dataio::RunResult::pehe_in);
    out[g].pehe_out = stat(&dataio::RunResult::pehe_out);
    out[g].policy_risk_in = stat(&dataio::RunResult::policy_risk_in);
    out[g].policy_risk_out = stat(&dataio::RunResult::policy_risk_out);
    out[g].ate_err = stat(&dataio::RunResult::ate_err);
  }
  return out;
}

int cmd_report(const fs::path& results, const fs::path& out, bool force, std::ostream& log) {
  const auto rows = dataio::read_results(results);
  if (rows.empty()) {
    log << "empty report: " << results.string() << " contains no result rows\n";
    return kExitOk;
  }
  const auto report = summarize(rows, force);
  const std::vector<std::pair<std::string, MetricSummary ReportRow::*>> metrics = {
      {"pehe_in", &ReportRow::pehe_in},
      {"pehe_out", &ReportRow::pehe_out},
      {"policy_risk_in", &ReportRow::policy_risk_in},
      {"policy_risk_out", &ReportRow::policy_risk_out},
      {"ate_err", &ReportRow::ate_err}};
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };

  std::ostringstream csv;
  csv << "method,dataset,rows,failures";
  for (const auto& [name, _] : metrics) csv << "," << name << "_mean," << name << "_se";
  csv << "\n";
  for (const auto& r : report) {
    csv << r.method << "," << r.dataset << "," << r.rows << "," << r.failures;
    for (const auto& [_, m] : metrics) csv << "," << opt((r.*m).mean) << "," << opt((r.*m).se);
    csv << "\n";
  }
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out);
    if (!f) throw Error("cannot write " + out.string());
    f << csv.str();
  }

  // Aligned text table; only metrics with at least one value are shown.
  std::vector<std::size_t> shown;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    for (const auto& r : report) {
      if ((r.*(metrics[k].second)).count > 0) {
        shown.push_back(k);
        break;
      }
    }
  }
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head = {"method", "dataset", "reps"};
  for (auto k : shown) head.push_back(metrics[k].first);
  table.push_back(head);
  for (const auto& r : report) {
    std::vector<std::string> line = {r.method, r.dataset,
                                     std::to_string(r.rows - r.failures) + "/" +
                                         std::to_string(r.rows)};
    for (auto k : shown) {
      const auto& m = r.*(metrics[k].second);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3);
      if (m.mean) {
        cell << *m.mean;
        if (m.se) cell << " +- " << *m.se;
      } else {
        cell << "-";
      }
      line.push_back(cell.str());
    }
    table.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      log << std::left << std::setw(static_cast<int>(width[c]) + 2) << line[c];
    }
    log << "\n";
  }
  return kExitOk;
}

GradcheckOutcome run_gradcheck(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& g = cfg.gradcheck;
  train::TrainConfig tc = cfg.train;
  tc.model_kind = train::ModelKind::CrossNet;
  tc.lambda_grid.clear();
  tc.net.rep_layers = {g.rep_dim};
  tc.net.head_layers = {g.head_width};

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SampleSet s;
  s.x.resize(g.n, g.d);
  s.t.resize(g.n);
  s.y.resize(g.n);
  for (Index i = 0; i < g.n; ++i) {
    for (Index j = 0; j < g.d; ++j) s.x(i, j) = normal(rng);
    s.t[i] = static_cast<int>(i % 2);
    s.y[i] = s.x.row(i).squaredNorm() / static_cast<double>(g.d) + s.t[i] + 0.1 * normal(rng);
  }
  if (tc.loss_kind == train::LossKind::Bce) {
    for (Index i = 0; i < g.n; ++i) s.y[i] = s.y[i] > 1.0 ? 1.0 : 0.0;
  }
  std::vector<Index> rows(static_cast<std::size_t>(g.n));
  for (Index i = 0; i < g.n; ++i) rows[static_cast<std::size_t>(i)] = i;
  const train::Batch batch = train::make_batch(s, rows);

  nets::ModelParams params =
      nets::init_params(train::effective_net_config(tc, g.d), cfg.seed + 1);
  const train::LossGrad lg = train::loss_and_grad(params, batch, tc);
  Vector analytic = lg.grad;
  if (g.corrupt) {
    Index k = 0;
    analytic.cwiseAbs().maxCoeff(&k);
    analytic[k] += 0.1 * std::max(1.0, std::abs(analytic[k]));
  }
  auto f = [&](const Vector& v) {
    nets::ModelParams p = params;
    p.values = v;
    return train::evaluate(p, batch, tc).total;
  };
  const Vector numeric = grad::finite_diff_grad(f, params.values, g.step);
  GradcheckOutcome out;
  out.report = grad::grad_check(analytic, numeric, g.tolerance, 1e-6);
  out.parts = lg.parts;
  return out;
}

int cmd_gradcheck(const ExperimentConfig& cfg, std::ostream& log) {
  const auto o = run_gradcheck(cfg);
  log << "gradcheck: params=" << o.report.n_params << " loss=" << o.parts.total
      << " (L1=" << o.parts.factual_treated << " L0=" << o.parts.factual_control
      << " D0=" << o.parts.disc_y0 << " D1=" << o.parts.disc_y1 << ")"
      << (o.parts.penalty_skipped ? " penalty skipped" : "") << "\n"
      << "max_abs_err=" << o.report.max_abs_err << " max_rel_err=" << o.report.max_rel_err
      << " worst_param=" << o.report.worst_param_index << " tol=" << cfg.gradcheck.tolerance
      << " -> " << (o.report.passed ? "PASS" : "FAIL") << "\n";
  return o.report.passed ? kExitOk : kExitGradcheck;
}

}  // namespace crossnet::bench
