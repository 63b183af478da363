#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "crossnet/errors.hpp"
#include "crossnet/gradcheck.hpp"
#include "crossnet/synthgen.hpp"
#include "crossnet/trainer.hpp"
#include "oracles.hpp"

using namespace crossnet;
using namespace crossnet::train;

namespace {

TrainConfig small_config(ModelKind kind) {
  TrainConfig cfg;
  cfg.model_kind = kind;
  cfg.net.rep_layers = {8, 4};
  cfg.net.head_layers = {6};
  cfg.batch_size = 64;
  cfg.max_epochs = 8;
  cfg.patience = 50;
  cfg.seed = 5;
  return cfg;
}

SampleSet small_data(std::uint64_t seed, Index n = 240) {
  synth::SynthConfig s;
  s.setting = synth::Setting::S2;
  s.n = n;
  s.seed = seed;
  return synth::simulate(s);
}

Batch random_batch(std::mt19937_64& rng, Index n1, Index n0, Index d) {
  Batch b;
  b.x1 = oracle::random_matrix(rng, n1, d);
  b.x0 = oracle::random_matrix(rng, n0, d);
  b.y1 = oracle::random_matrix(rng, n1, 1).col(0);
  b.y0 = oracle::random_matrix(rng, n0, 1).col(0);
  return b;
}

double mse(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / double(a.size()); }

}  // namespace

TEST_CASE("CrossNet objective matches an independent evaluation") {
  std::mt19937_64 rng(1);
  const Batch b = random_batch(rng, 4, 4, 3);
  for (auto flavor : {matdiv::Flavor::LogDet, matdiv::Flavor::VonNeumann}) {
    TrainConfig cfg = small_config(ModelKind::CrossNet);
    cfg.net.rep_layers = {2};
    cfg.net.head_layers = {3};
    cfg.lambda = 0.7;
    cfg.divergence.flavor = flavor;
    cfg.divergence.jitter = 1e-3;
    const auto params = nets::init_params(effective_net_config(cfg, 3), 9);

    const Matrix phi1 = nets::forward_rep(params, b.x1);
    const Matrix phi0 = nets::forward_rep(params, b.x0);
    const Vector h1_1 = nets::forward_head(params, nets::Arm::Treated, phi1);
    const Vector h0_0 = nets::forward_head(params, nets::Arm::Control, phi0);
    const Vector h0_1 = nets::forward_head(params, nets::Arm::Control, phi1);
    const Vector h1_0 = nets::forward_head(params, nets::Arm::Treated, phi0);
    const bool logdet = flavor == matdiv::Flavor::LogDet;
    const double l1 = mse(h1_1, b.y1), l0 = mse(h0_0, b.y0);
    const double d0 = oracle::cond_div(phi0, b.y0, phi1, h0_1, 1.0, 1e-3, logdet);
    const double d1 = oracle::cond_div(phi0, h1_0, phi1, b.y1, 1.0, 1e-3, logdet);

    const LossParts p = evaluate(params, b, cfg);
    CHECK(std::abs(p.factual_treated - l1) < 1e-10);
    CHECK(std::abs(p.factual_control - l0) < 1e-10);
    CHECK(std::abs(p.disc_y0 - d0) < 1e-10);
    CHECK(std::abs(p.disc_y1 - d1) < 1e-10);
    CHECK(std::abs(p.total - (l1 + l0 + 0.7 * (d0 + d1))) < 1e-10);
    CHECK_FALSE(p.penalty_skipped);
  }
}

TEST_CASE("CrossNet gradient matches finite differences") {
  std::mt19937_64 rng(2);
  const Batch b = random_batch(rng, 6, 5, 4);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  cfg.net.rep_layers = {3};
  cfg.net.head_layers = {4};
  for (bool sym : {false, true}) {
    cfg.divergence.symmetrize = sym;
    const auto params = nets::init_params(effective_net_config(cfg, 4), 3);
    const LossGrad lg = loss_and_grad(params, b, cfg);
    const Vector num = grad::finite_diff_grad(
        [&](const Vector& v) {
          auto p = params;
          p.values = v;
          return evaluate(p, b, cfg).total;
        },
        params.values, 1e-6);
    CHECK(grad::grad_check(lg.grad, num, 1e-5, 1e-6).passed);
  }
}

TEST_CASE("counterfactual predictions carry gradient across groups") {
  std::mt19937_64 rng(3);
  const Batch b = random_batch(rng, 6, 6, 3);
  TrainConfig on = small_config(ModelKind::CrossNet);
  TrainConfig off = on;
  off.lambda = 0.0;
  const auto params = nets::init_params(effective_net_config(on, 3), 4);
  const Vector g_pen = loss_and_grad(params, b, on).grad - loss_and_grad(params, b, off).grad;
  auto p = params;
  p.values = g_pen;
  // The penalty reaches both heads: h0 through D0 (evaluated on treated rows)
  // and h1 through D1 (evaluated on control rows).
  CHECK(p.head1_weights().cwiseAbs().maxCoeff() > 1e-8);
  CHECK(p.head0_weights().cwiseAbs().maxCoeff() > 1e-8);
  CHECK(p.rep_weights().cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("control rows train the treated head through the penalty") {
  std::mt19937_64 rng(6);
  Batch b = random_batch(rng, 6, 6, 3);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  const auto params = nets::init_params(effective_net_config(cfg, 3), 8);
  // Zero the factual treated loss: y1 equals the h1 predictions exactly.
  b.y1 = nets::forward_head(params, nets::Arm::Treated, nets::forward_rep(params, b.x1));
  TrainConfig off = cfg;
  off.lambda = 0.0;
  auto p = params;
  p.values = loss_and_grad(params, b, off).grad;
  CHECK(p.head1_weights().isZero(0.0));
  p.values = loss_and_grad(params, b, cfg).grad;
  CHECK(p.head1_weights().cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("small groups skip the penalty") {
  std::mt19937_64 rng(4);
  const Batch b = random_batch(rng, 3, 10, 3);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  const auto params = nets::init_params(effective_net_config(cfg, 3), 4);
  const LossParts p = evaluate(params, b, cfg);
  CHECK(p.penalty_skipped);
  CHECK(p.total == p.factual_treated + p.factual_control);
}

TEST_CASE("lambda = 0 reproduces TARNet exactly") {
  const SampleSet data = small_data(11);
  TrainConfig cross = small_config(ModelKind::CrossNet);
  cross.lambda = 0.0;
  TrainConfig tar = small_config(ModelKind::TARNet);
  const TrainResult a = train::train(data, cross);
  const TrainResult b = train::train(data, tar);
  CHECK((a.params.values.array() == b.params.values.array()).all());
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t k = 0; k < a.history.epochs.size(); ++k) {
    CHECK(a.history.epochs[k].val.total == b.history.epochs[k].val.total);
  }
}

TEST_CASE("training is deterministic and reduces the validation objective") {
  const SampleSet data = small_data(12);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  cfg.max_epochs = 15;
  const TrainResult a = train::train(data, cfg);
  const TrainResult b = train::train(data, cfg);
  CHECK((a.params.values.array() == b.params.values.array()).all());
  CHECK(a.history.best_val_total < a.history.epochs.front().val.total);
  CHECK(a.history.best_epoch > 0);
  CHECK_FALSE(a.history.stop_reason.empty());

  const Vector cate = predict_cate(a.params, data.x);
  CHECK(cate.size() == data.size());
  CHECK(cate.allFinite());
}

TEST_CASE("recorded batches satisfy the objective identity") {
  const SampleSet data = small_data(13);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  cfg.lambda = 0.3;
  cfg.max_epochs = 3;
  cfg.record_batches = true;
  const TrainResult r = train::train(data, cfg);
  REQUIRE_FALSE(r.history.batches.empty());
  for (const LossParts& p : r.history.batches) {
    if (p.penalty_skipped) continue;
    CHECK(std::abs(p.total - (p.factual_treated + p.factual_control +
                              0.3 * (p.disc_y0 + p.disc_y1))) <= 1e-12);
  }
}

TEST_CASE("CFRNet balancing penalty") {
  TrainConfig cfg = small_config(ModelKind::CFRNet);
  cfg.net.rep_layers = {};
  cfg.net.head_layers = {};
  cfg.cfr_alpha = 0.5;
  const auto params = nets::zero_params(effective_net_config(cfg, 2));
  Batch b;
  b.x1.resize(2, 2);
  b.x1 << 1.0, 0.0, 3.0, 0.0;
  b.x0.resize(2, 2);
  b.x0 << 0.0, 1.0, 0.0, 1.0;
  b.y1 = Vector::Zero(2);
  b.y0 = Vector::Zero(2);
  const LossParts p = evaluate(params, b, cfg);
  CHECK(p.penalty == doctest::Approx(0.5 * (4.0 + 1.0)).epsilon(1e-14));
  CHECK(p.total == doctest::Approx(2.5).epsilon(1e-14));
  cfg.model_kind = ModelKind::TARNet;
  CHECK(evaluate(params, b, cfg).penalty == 0.0);
}

TEST_CASE("TNet has unshared heads") {
  TrainConfig cfg = small_config(ModelKind::TNet);
  const nets::NetConfig net = effective_net_config(cfg, 7);
  CHECK(net.rep_layers.empty());
  CHECK_FALSE(net.share_representation);
  CHECK(net.head_layers == std::vector<Index>{8, 4, 6});
  CHECK(effective_net_config(small_config(ModelKind::TARNet), 7).rep_layers ==
        std::vector<Index>{8, 4});
}

TEST_CASE("stratified batches partition both groups") {
  std::vector<Index> treated, control;
  for (Index i = 0; i < 30; ++i) treated.push_back(i);
  for (Index i = 30; i < 130; ++i) control.push_back(i);
  const auto batches = stratified_batches(treated, control, 32);
  CHECK(batches.size() == 5);
  std::set<Index> seen;
  for (const auto& b : batches) {
    const auto n1 = std::count_if(b.begin(), b.end(), [](Index i) { return i < 30; });
    CHECK(n1 == 6);
    seen.insert(b.begin(), b.end());
  }
  CHECK(seen.size() == 130);
}

TEST_CASE("lambda grid keeps one of its values") {
  const SampleSet data = small_data(14, 160);
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  cfg.max_epochs = 3;
  cfg.lambda_grid = {0.1, 10.0};
  const TrainResult r = train::train(data, cfg);
  CHECK((r.history.lambda == 0.1 || r.history.lambda == 10.0));
}

TEST_CASE("outcome standardization is folded into the returned model") {
  SampleSet data = small_data(15);
  TrainConfig cfg = small_config(ModelKind::TARNet);
  cfg.max_epochs = 30;
  const TrainResult base = train::train(data, cfg);
  SampleSet shifted = data;
  shifted.y = (data.y.array() * 10.0 + 100.0).matrix();
  shifted.mu0.reset();
  shifted.mu1.reset();
  shifted.cate.reset();
  const TrainResult big = train::train(shifted, cfg);
  const Vector y0 = nets::forward_head(base.params, nets::Arm::Control,
                                       nets::forward_rep(base.params, data.x));
  const Vector y0_big = nets::forward_head(big.params, nets::Arm::Control,
                                           nets::forward_rep(big.params, data.x));
  CHECK(((y0_big.array() - (10.0 * y0.array() + 100.0)).abs().maxCoeff()) < 1e-6);
}

TEST_CASE("configuration and data errors") {
  TrainConfig cfg = small_config(ModelKind::CrossNet);
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_config(ModelKind::CrossNet);
  cfg.batch_size = 4;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_config(ModelKind::CrossNet);
  cfg.val_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK(model_kind_from_string("CFRNet") == ModelKind::CFRNet);
  CHECK_THROWS_AS(model_kind_from_string("DragonNet"), InvalidArgument);

  SampleSet one_treated = small_data(16, 40);
  one_treated.t.setZero();
  one_treated.t[0] = 1;
  CHECK_THROWS_AS(train::train(one_treated, small_config(ModelKind::TARNet)), InsufficientSample);
}
