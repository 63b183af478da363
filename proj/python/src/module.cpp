// Python bindings: divergences, the synthetic DGP, training and metrics.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crossnet/bench.hpp"
#include "crossnet/dataio.hpp"
#include "crossnet/errors.hpp"
#include "crossnet/evalx.hpp"
#include "crossnet/matdiv.hpp"
#include "crossnet/synthgen.hpp"
#include "crossnet/trainer.hpp"

namespace py = pybind11;
using namespace crossnet;

namespace {

matdiv::Flavor flavor_of(const std::string& name) {
  if (name == "logdet") return matdiv::Flavor::LogDet;
  if (name == "vonneumann") return matdiv::Flavor::VonNeumann;
  throw InvalidArgument("flavor must be 'logdet' or 'vonneumann'");
}

py::dict sample_dict(const SampleSet& s) {
  py::dict d;
  d["x"] = s.x;
  d["t"] = s.t;
  d["y"] = s.y;
  if (s.mu0) d["mu0"] = *s.mu0;
  if (s.mu1) d["mu1"] = *s.mu1;
  if (s.cate) d["cate"] = *s.cate;
  if (s.propensity) d["propensity"] = *s.propensity;
  if (s.randomized) d["randomized"] = *s.randomized;
  return d;
}

SampleSet sample_of(const Matrix& x, const Eigen::VectorXi& t, const Vector& y) {
  SampleSet s;
  s.x = x;
  s.t = t;
  s.y = y;
  s.validate();
  return s;
}

// Builds a training configuration from the same key=value vocabulary as the
// command-line tool.
train::TrainConfig train_config(const std::string& method, const py::dict& options) {
  bench::KeyValues kv;
  for (const auto& [k, v] : options) kv[py::str(k)] = py::str(v);
  auto cfg = bench::make_config(kv);
  cfg.validate();
  auto tc = bench::method_config(cfg, train::model_kind_from_string(method));
  tc.seed = cfg.seed;
  return tc;
}

struct Model {
  nets::ModelParams params;
  train::TrainHistory history;

  Vector predict_cate(const Matrix& x) const { return train::predict_cate(params, x); }
  Vector predict(const Matrix& x, int arm) const {
    const Matrix phi = nets::forward_rep(params, x);
    return nets::forward_head(params, arm == 1 ? nets::Arm::Treated : nets::Arm::Control, phi);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CATE estimation with a cross-group correntropy discrepancy penalty";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<InsufficientSample>(m, "InsufficientSample", base.ptr());
  py::register_exception<DegenerateMatrix>(m, "DegenerateMatrix", base.ptr());
  py::register_exception<NotFound>(m, "NotFound", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<InvalidSplit>(m, "InvalidSplit", base.ptr());
  py::register_exception<UndefinedCell>(m, "UndefinedCell", base.ptr());
  py::register_exception<NumericalAbort>(m, "NumericalAbort", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("rbf_kernel", &matdiv::rbf_kernel, py::arg("a"), py::arg("b"), py::arg("sigma") = 1.0);
  m.def(
      "centered_correntropy",
      [](const Vector& u, const Vector& v, double sigma) {
        return matdiv::centered_correntropy({u.data(), static_cast<std::size_t>(u.size())},
                                            {v.data(), static_cast<std::size_t>(v.size())},
                                            sigma);
      },
      py::arg("u"), py::arg("v"), py::arg("sigma") = 1.0);
  m.def(
      "correntropy_matrix",
      [](const Matrix& z, double sigma, double jitter) {
        matdiv::DivergenceConfig cfg;
        cfg.sigma = sigma;
        cfg.jitter = jitter;
        return Matrix(matdiv::correntropy_matrix(z, cfg).entries());
      },
      py::arg("z"), py::arg("sigma") = 1.0, py::arg("jitter") = 1e-6);
  m.def(
      "bregman",
      [](const Matrix& a, const Matrix& b, const std::string& flavor) {
        return matdiv::bregman(matdiv::SPDMatrix(a), matdiv::SPDMatrix(b), flavor_of(flavor));
      },
      py::arg("a"), py::arg("b"), py::arg("flavor") = "logdet");
  m.def(
      "cond_divergence",
      [](const Matrix& phi_from, const Vector& y_from, const Matrix& phi_to, const Vector& y_to,
         double sigma, double jitter, const std::string& flavor, bool symmetrize) {
        matdiv::DivergenceConfig cfg;
        cfg.sigma = sigma;
        cfg.jitter = jitter;
        cfg.flavor = flavor_of(flavor);
        cfg.symmetrize = symmetrize;
        return matdiv::cond_divergence(phi_from, y_from, phi_to, y_to, cfg);
      },
      py::arg("phi_from"), py::arg("y_from"), py::arg("phi_to"), py::arg("y_to"),
      py::arg("sigma") = 1.0, py::arg("jitter") = 1e-6, py::arg("flavor") = "logdet",
      py::arg("symmetrize") = false);

  m.def(
      "simulate",
      [](const std::string& setting, Index n, std::uint64_t seed, Index d, double xi,
         double noise_sd) {
        synth::SynthConfig cfg;
        if (setting == "S1") cfg.setting = synth::Setting::S1;
        else if (setting == "S2") cfg.setting = synth::Setting::S2;
        else throw InvalidArgument("setting must be 'S1' or 'S2'");
        cfg.n = n;
        cfg.seed = seed;
        cfg.d = d;
        cfg.xi = xi;
        cfg.noise_sd = noise_sd;
        return sample_dict(synth::simulate(cfg));
      },
      py::arg("setting") = "S1", py::arg("n") = 500, py::arg("seed") = 0, py::arg("d") = 25,
      py::arg("xi") = 3.0, py::arg("noise_sd") = 1.0);

  py::class_<Model>(m, "Model")
      .def("predict_cate", &Model::predict_cate, py::arg("x"))
      .def("predict", &Model::predict, py::arg("x"), py::arg("arm"))
      .def_property_readonly("params", [](const Model& md) { return md.params.values; })
      .def_property_readonly("best_epoch", [](const Model& md) { return md.history.best_epoch; })
      .def_property_readonly("lambda_", [](const Model& md) { return md.history.lambda; })
      .def_property_readonly("stop_reason", [](const Model& md) { return md.history.stop_reason; })
      .def_property_readonly("val_curve", [](const Model& md) {
        std::vector<double> v;
        for (const auto& e : md.history.epochs) v.push_back(e.val.total);
        return v;
      });

  m.def(
      "train",
      [](const Matrix& x, const Eigen::VectorXi& t, const Vector& y, const std::string& method,
         const py::dict& options) {
        const SampleSet s = sample_of(x, t, y);
        const auto tc = train_config(method, options);
        py::gil_scoped_release release;
        auto r = train::train(s, tc);
        return Model{std::move(r.params), std::move(r.history)};
      },
      py::arg("x"), py::arg("t"), py::arg("y"), py::arg("method") = "CrossNet",
      py::arg("options") = py::dict(),
      "Train one model. `options` takes the key=value configuration keys of the CLI.");

  m.def("pehe", &evalx::pehe, py::arg("tau_hat"), py::arg("tau_true"));
  m.def("abs_ate_error", &evalx::abs_ate_error, py::arg("tau_hat"), py::arg("tau_true"));
  m.def(
      "policy_risk",
      [](const Vector& tau_hat, const Vector& y, const Eigen::VectorXi& t,
         const Eigen::VectorXi& randomized, double threshold) {
        return evalx::policy_risk(tau_hat, y, t, randomized, evalx::PolicySpec{threshold});
      },
      py::arg("tau_hat"), py::arg("y"), py::arg("t"), py::arg("randomized"),
      py::arg("threshold") = 0.0);

  m.def(
      "load_ihdp",
      [](const std::string& dir, int k) {
        const auto r = dataio::load_ihdp(dir, k);
        return py::make_tuple(sample_dict(r.train), sample_dict(r.test));
      },
      py::arg("dir"), py::arg("replication"));
  m.def(
      "load_jobs", [](const std::string& path) { return sample_dict(dataio::load_jobs(path)); },
      py::arg("path"));

  m.def(
      "gradcheck",
      [](const py::dict& options) {
        bench::KeyValues kv{{"experiment", "gradcheck"}};
        for (const auto& [k, v] : options) kv[py::str(k)] = py::str(v);
        const auto o = bench::run_gradcheck(bench::make_config(kv));
        py::dict d;
        d["passed"] = o.report.passed;
        d["max_rel_err"] = o.report.max_rel_err;
        d["max_abs_err"] = o.report.max_abs_err;
        d["n_params"] = o.report.n_params;
        return d;
      },
      py::arg("options") = py::dict());
}
