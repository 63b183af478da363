#include "crossnet/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "crossnet/errors.hpp"

namespace crossnet::dataio {

namespace fs = std::filesystem;

const char* const kResultsHeader =
    "method,dataset,rep,seed,pehe_in,pehe_out,policy_risk_in,policy_risk_out,ate_err,"
    "wall_seconds,config_hash";

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_numeric_csv(const fs::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  t.header = split_fields(strip_cr(line));
  if (t.header != expected_header) {
    std::string want;
    for (std::size_t i = 0; i < expected_header.size(); ++i) {
      want += (i ? "," : "") + expected_header[i];
    }
    throw FormatError(path.string() + ": unexpected header, expected '" + want + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != expected_header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(expected_header.size()) + " columns, found " +
                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f, path, line_no));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<std::string> with_covariates(std::vector<std::string> head, Index d) {
  for (Index j = 1; j <= d; ++j) head.push_back("x" + std::to_string(j));
  return head;
}

int as_binary(double v, const fs::path& path, const char* column) {
  if (v != 0.0 && v != 1.0) {
    throw FormatError(path.string() + ": column " + column + " must be 0 or 1");
  }
  return static_cast<int>(v);
}

struct IhdpFile {
  SampleSet set;
  Vector y_cfactual;
};

IhdpFile read_ihdp_file(const fs::path& path) {
  const auto header = with_covariates({"t", "y_factual", "y_cfactual", "mu0", "mu1"},
                                      kIhdpCovariates);
  const Table t = read_numeric_csv(path, header);
  const auto n = static_cast<Index>(t.rows.size());
  IhdpFile f;
  SampleSet& s = f.set;
  s.x.resize(n, kIhdpCovariates);
  s.t.resize(n);
  s.y.resize(n);
  f.y_cfactual.resize(n);
  Vector mu0(n), mu1(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    s.t[i] = as_binary(r[0], path, "t");
    s.y[i] = r[1];
    f.y_cfactual[i] = r[2];
    mu0[i] = r[3];
    mu1[i] = r[4];
    for (Index j = 0; j < kIhdpCovariates; ++j) s.x(i, j) = r[static_cast<std::size_t>(5 + j)];
  }
  s.cate = (mu1 - mu0).eval();
  s.mu0 = std::move(mu0);
  s.mu1 = std::move(mu1);
  return f;
}

void write_lines(const fs::path& path, const std::string& header,
                 const std::vector<std::string>& lines, bool append = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const bool exists = fs::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  if (!append || !exists || fs::file_size(path) == 0) out << header << '\n';
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::string join_header(const std::vector<std::string>& h) {
  std::string out;
  for (std::size_t i = 0; i < h.size(); ++i) out += (i ? "," : "") + h[i];
  return out;
}

std::string covariate_fields(const SampleSet& s, Index i) {
  std::string out;
  for (Index j = 0; j < s.x.cols(); ++j) out += "," + fmt(s.x(i, j));
  return out;
}

std::optional<double> parse_optional(const std::string& s, const fs::path& path,
                                     std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, path, line);
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const Index n = x.rows();
  s.mean = Vector::Zero(x.cols());
  s.scale = Vector::Ones(x.cols());
  s.binary.assign(static_cast<std::size_t>(x.cols()), false);
  for (Index j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j).array();
    const bool binary = ((col == 0.0) || (col == 1.0)).all();
    s.binary[static_cast<std::size_t>(j)] = binary;
    if (binary || n == 0) continue;
    const double m = col.mean();
    const double var = (col - m).square().sum() / static_cast<double>(n);
    s.mean[j] = m;
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw InvalidArgument("Standardizer: column count mismatch");
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    if (binary[static_cast<std::size_t>(j)]) continue;
    out.col(j) = ((x.col(j).array() - mean[j]) / scale[j]).matrix();
  }
  return out;
}

IhdpReplication load_ihdp(const fs::path& dir, int k) {
  const fs::path train_path = dir / ("ihdp_train_" + std::to_string(k) + ".csv");
  const fs::path test_path = dir / ("ihdp_test_" + std::to_string(k) + ".csv");
  for (const auto& p : {train_path, test_path}) {
    if (!fs::exists(p)) {
      throw NotFound("IHDP replication " + std::to_string(k) + ": missing " + p.string());
    }
  }
  IhdpFile train = read_ihdp_file(train_path);
  IhdpFile test = read_ihdp_file(test_path);
  const Index total = train.set.size() + test.set.size();
  const Index treated = train.set.n_treated() + test.set.n_treated();
  if (total != kIhdpUnits || treated != kIhdpTreated) {
    throw FormatError("IHDP replication " + std::to_string(k) + " (" + train_path.string() +
                      ", " + test_path.string() + "): expected " + std::to_string(kIhdpUnits) +
                      " units with " + std::to_string(kIhdpTreated) + " treated, found " +
                      std::to_string(total) + " with " + std::to_string(treated));
  }
  const Standardizer st = Standardizer::fit(train.set.x);
  train.set.x = st.apply(train.set.x);
  test.set.x = st.apply(test.set.x);
  return {std::move(train.set), std::move(test.set)};
}

SampleSet load_jobs(const fs::path& path, std::vector<std::string>* warnings) {
  const auto header = with_covariates({"t", "y", "e"}, kJobsCovariates);
  const Table t = read_numeric_csv(path, header);
  const auto n = static_cast<Index>(t.rows.size());
  if (n == 0) throw FormatError(path.string() + ": no rows");
  SampleSet s;
  s.x.resize(n, kJobsCovariates);
  s.t.resize(n);
  s.y.resize(n);
  Eigen::VectorXi e(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    s.t[i] = as_binary(r[0], path, "t");
    s.y[i] = as_binary(r[1], path, "y");
    e[i] = as_binary(r[2], path, "e");
    for (Index j = 0; j < kJobsCovariates; ++j) s.x(i, j) = r[static_cast<std::size_t>(3 + j)];
  }
  bool rand_treated = false, rand_control = false;
  Index treated_outside = 0;
  for (Index i = 0; i < n; ++i) {
    if (e[i] == 1) (s.t[i] == 1 ? rand_treated : rand_control) = true;
    if (s.t[i] == 1 && e[i] == 0) ++treated_outside;
  }
  if (!rand_treated || !rand_control) {
    throw FormatError(path.string() +
                      ": the randomized subset (e == 1) must contain treated and control units");
  }
  if (treated_outside > 0 && warnings != nullptr) {
    warnings->push_back(path.string() + ": " + std::to_string(treated_outside) +
                        " treated rows lie outside the randomized sample");
  }
  s.randomized = std::move(e);
  s.x = Standardizer::fit(s.x).apply(s.x);
  return s;
}

void write_ihdp_csv(const fs::path& path, const SampleSet& s, const Vector& y_cfactual) {
  if (!s.mu0 || !s.mu1) throw InvalidArgument("write_ihdp_csv: mu0 and mu1 are required");
  std::vector<std::string> lines;
  for (Index i = 0; i < s.size(); ++i) {
    lines.push_back(std::to_string(s.t[i]) + "," + fmt(s.y[i]) + "," + fmt(y_cfactual[i]) + "," +
                    fmt((*s.mu0)[i]) + "," + fmt((*s.mu1)[i]) + covariate_fields(s, i));
  }
  write_lines(path,
              join_header(with_covariates({"t", "y_factual", "y_cfactual", "mu0", "mu1"},
                                          s.x.cols())),
              lines);
}

void write_jobs_csv(const fs::path& path, const SampleSet& s) {
  if (!s.randomized) throw InvalidArgument("write_jobs_csv: randomized flag is required");
  std::vector<std::string> lines;
  for (Index i = 0; i < s.size(); ++i) {
    lines.push_back(std::to_string(s.t[i]) + "," + fmt(s.y[i]) + "," +
                    std::to_string((*s.randomized)[i]) + covariate_fields(s, i));
  }
  write_lines(path, join_header(with_covariates({"t", "y", "e"}, s.x.cols())), lines);
}

void write_sample_csv(const fs::path& path, const SampleSet& s) {
  if (!s.mu0 || !s.mu1 || !s.cate || !s.propensity) {
    throw InvalidArgument("write_sample_csv: ground-truth fields are required");
  }
  std::vector<std::string> lines;
  lines.reserve(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) {
    lines.push_back(std::to_string(s.t[i]) + "," + fmt(s.y[i]) + "," + fmt((*s.mu0)[i]) + "," +
                    fmt((*s.mu1)[i]) + "," + fmt((*s.cate)[i]) + "," + fmt((*s.propensity)[i]) +
                    covariate_fields(s, i));
  }
  write_lines(path,
              join_header(with_covariates({"t", "y", "mu0", "mu1", "cate", "propensity"},
                                          s.x.cols())),
              lines);
}

SampleSet read_sample_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_fields(strip_cr(line));
  const auto d = static_cast<Index>(header.size()) - 6;
  if (d < 1) throw FormatError(path.string() + ": too few columns");
  in.close();
  const Table t =
      read_numeric_csv(path, with_covariates({"t", "y", "mu0", "mu1", "cate", "propensity"}, d));
  const auto n = static_cast<Index>(t.rows.size());
  SampleSet s;
  s.x.resize(n, d);
  s.t.resize(n);
  s.y.resize(n);
  Vector mu0(n), mu1(n), cate(n), prop(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    s.t[i] = as_binary(r[0], path, "t");
    s.y[i] = r[1];
    mu0[i] = r[2];
    mu1[i] = r[3];
    cate[i] = r[4];
    prop[i] = r[5];
    for (Index j = 0; j < d; ++j) s.x(i, j) = r[static_cast<std::size_t>(6 + j)];
  }
  s.mu0 = std::move(mu0);
  s.mu1 = std::move(mu1);
  s.cate = std::move(cate);
  s.propensity = std::move(prop);
  return s;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0)) {
    throw InvalidSplit("split fractions must be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw InvalidSplit("split fractions must sum to 1");
  }
}

Split split_indices(const SampleSet& data, const SplitSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Split out;
  auto assign = [&](std::vector<Index> rows, bool require_all) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n = static_cast<Index>(rows.size());
    const auto n_test = static_cast<Index>(std::llround(spec.test_frac * static_cast<double>(n)));
    const auto n_val = static_cast<Index>(std::llround(spec.val_frac * static_cast<double>(n)));
    const Index n_train = n - n_val - n_test;
    if (require_all && (n_train < 1 || n_val < 1 || n_test < 1)) {
      throw InvalidSplit("stratum of " + std::to_string(n) +
                         " units is too small for a nonempty train/val/test split");
    }
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + n_train);
    out.val.insert(out.val.end(), rows.begin() + n_train, rows.begin() + n_train + n_val);
    out.test.insert(out.test.end(), rows.begin() + n_train + n_val, rows.end());
  };
  if (spec.stratify_by_t) {
    assign(data.group(1), true);
    assign(data.group(0), true);
  } else {
    std::vector<Index> all(static_cast<std::size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    assign(all, true);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitData split(const SampleSet& data, const SplitSpec& spec) {
  const Split idx = split_indices(data, spec);
  return {data.subset(idx.train), data.subset(idx.val), data.subset(idx.test)};
}

bool RunResult::failed() const {
  return !pehe_in && !pehe_out && !policy_risk_in && !policy_risk_out && !ate_err;
}

std::string format_result(const RunResult& r) {
  return r.method + "," + r.dataset + "," + std::to_string(r.rep) + "," + std::to_string(r.seed) +
         "," + fmt_optional(r.pehe_in) + "," + fmt_optional(r.pehe_out) + "," +
         fmt_optional(r.policy_risk_in) + "," + fmt_optional(r.policy_risk_out) + "," +
         fmt_optional(r.ate_err) + "," + fmt(r.wall_seconds) + "," + r.config_hash;
}

void write_results(const std::vector<RunResult>& results, const fs::path& path) {
  std::vector<std::string> lines;
  for (const auto& r : results) lines.push_back(format_result(r));
  write_lines(path, kResultsHeader, lines);
}

void append_results(const std::vector<RunResult>& results, const fs::path& path) {
  std::vector<std::string> lines;
  for (const auto& r : results) lines.push_back(format_result(r));
  write_lines(path, kResultsHeader, lines, true);
}

std::vector<RunResult> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open results file " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kResultsHeader) {
    throw FormatError(path.string() + ": missing or unexpected results header");
  }
  std::vector<RunResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 11) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 11 fields");
    }
    RunResult r;
    r.method = f[0];
    r.dataset = f[1];
    r.rep = static_cast<int>(parse_double(f[2], path, line_no));
    {
      const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), r.seed);
      if (res.ec != std::errc()) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad seed");
      }
    }
    r.pehe_in = parse_optional(f[4], path, line_no);
    r.pehe_out = parse_optional(f[5], path, line_no);
    r.policy_risk_in = parse_optional(f[6], path, line_no);
    r.policy_risk_out = parse_optional(f[7], path, line_no);
    r.ate_err = parse_optional(f[8], path, line_no);
    r.wall_seconds = parse_double(f[9], path, line_no);
    r.config_hash = f[10];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace crossnet::dataio
