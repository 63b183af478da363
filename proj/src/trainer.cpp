#include "crossnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "crossnet/errors.hpp"

namespace crossnet::train {

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kInit = 1, kBatches = 2, kSplit = 3 };

grad::Var column(grad::Tape& tape, const Vector& v) { return tape.constant(Matrix(v)); }

grad::Var factual_loss(grad::Var pred, grad::Var target, LossKind kind) {
  return kind == LossKind::Bce ? grad::bce_mean(pred, target) : grad::mse_mean(pred, target);
}

// Correntropy matrix of [Phi, y] assembled from the shared Phi block.
grad::Var joint_correntropy(grad::Var phi_block, grad::Var phi, grad::Var y, double sigma,
                            double jitter) {
  grad::Var cross = grad::cross_correntropy(phi, y, sigma);
  grad::Var yy = grad::self_correntropy(y, sigma);
  grad::Var top = grad::hconcat(phi_block, cross);
  grad::Var bottom = grad::hconcat(grad::transpose(cross), yy);
  return grad::add_diagonal(grad::vconcat(top, bottom), jitter);
}

grad::Var bregman(grad::Var a, grad::Var b, matdiv::Flavor flavor, std::size_t rows) {
  return flavor == matdiv::Flavor::LogDet ? grad::bregman_logdet(a, b, rows)
                                          : grad::bregman_vonneumann(a, b, rows);
}

struct GroupStats {
  grad::Var phi;
  grad::Var phi_block;  // self correntropy of Phi, no jitter
};

// Disc(from -> to) given the joint matrices and the marginal divergence terms.
grad::Var conditional_divergence(grad::Var cxy_from, grad::Var cxy_to, grad::Var dx_forward,
                                 grad::Var dx_backward, const matdiv::DivergenceConfig& div,
                                 std::size_t rows) {
  grad::Var forward = grad::sub(bregman(cxy_from, cxy_to, div.flavor, rows), dx_forward);
  if (!div.symmetrize) return forward;
  grad::Var backward = grad::sub(bregman(cxy_to, cxy_from, div.flavor, rows), dx_backward);
  return grad::scale(grad::add(forward, backward), 0.5);
}

LossParts mean_parts(const std::vector<LossParts>& parts) {
  LossParts m;
  if (parts.empty()) return m;
  for (const auto& p : parts) {
    m.factual_treated += p.factual_treated;
    m.factual_control += p.factual_control;
    m.disc_y0 += p.disc_y0;
    m.disc_y1 += p.disc_y1;
    m.penalty += p.penalty;
    m.total += p.total;
    m.penalty_skipped = m.penalty_skipped || p.penalty_skipped;
  }
  const double k = static_cast<double>(parts.size());
  m.factual_treated /= k;
  m.factual_control /= k;
  m.disc_y0 /= k;
  m.disc_y1 /= k;
  m.penalty /= k;
  m.total /= k;
  return m;
}

struct Holdout {
  std::vector<Index> train;
  std::vector<Index> val;
};

Holdout stratified_holdout(const SampleSet& data, double val_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Holdout h;
  for (int arm : {1, 0}) {
    std::vector<Index> rows = data.group(arm);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n = static_cast<Index>(rows.size());
    Index n_val = static_cast<Index>(std::llround(val_fraction * static_cast<double>(n)));
    n_val = std::clamp<Index>(n_val, n >= 2 ? 1 : 0, std::max<Index>(n - 1, 0));
    h.val.insert(h.val.end(), rows.begin(), rows.begin() + n_val);
    h.train.insert(h.train.end(), rows.begin() + n_val, rows.end());
  }
  std::sort(h.train.begin(), h.train.end());
  std::sort(h.val.begin(), h.val.end());
  return h;
}

// Folds y = mean + scale * y_std into the output layers of both heads.
void fold_outcome_scaling(nets::ModelParams& params, double mean, double scale) {
  for (auto* head : {&params.head1, &params.head0}) {
    const auto& l = head->back();
    params.values.segment(l.offset, l.weight_count()) *= scale;
    double& bias = params.values[l.offset + l.weight_count()];
    bias = bias * scale + mean;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda grid values must be >= 0");
  }
  divergence.validate();
  if (!(cfr_alpha >= 0.0)) throw InvalidArgument("cfr_alpha must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be positive");
  if (patience < 1) throw InvalidArgument("patience must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must lie in (0, 1)");
  }
  if (min_group_per_batch < 1) throw InvalidArgument("min_group_per_batch must be positive");
  if (model_kind == ModelKind::CrossNet && min_group_per_batch < 2) {
    throw InvalidArgument("CrossNet needs min_group_per_batch >= 2");
  }
  if ((uses_divergence() || !lambda_grid.empty()) && batch_size < 2 * min_group_per_batch) {
    throw InvalidArgument("batch_size must be at least 2 * min_group_per_batch");
  }
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::CrossNet: return "CrossNet";
    case ModelKind::TNet: return "TNet";
    case ModelKind::TARNet: return "TARNet";
    case ModelKind::CFRNet: return "CFRNet";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (auto k : {ModelKind::CrossNet, ModelKind::TNet, ModelKind::TARNet, ModelKind::CFRNet}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown method: " + name);
}

Batch make_batch(const SampleSet& data, const std::vector<Index>& rows) {
  std::vector<Index> treated, control;
  for (Index r : rows) (data.t[r] == 1 ? treated : control).push_back(r);
  Batch b;
  b.x1.resize(static_cast<Index>(treated.size()), data.x.cols());
  b.y1.resize(static_cast<Index>(treated.size()));
  for (std::size_t k = 0; k < treated.size(); ++k) {
    b.x1.row(static_cast<Index>(k)) = data.x.row(treated[k]);
    b.y1[static_cast<Index>(k)] = data.y[treated[k]];
  }
  b.x0.resize(static_cast<Index>(control.size()), data.x.cols());
  b.y0.resize(static_cast<Index>(control.size()));
  for (std::size_t k = 0; k < control.size(); ++k) {
    b.x0.row(static_cast<Index>(k)) = data.x.row(control[k]);
    b.y0[static_cast<Index>(k)] = data.y[control[k]];
  }
  return b;
}

nets::NetConfig effective_net_config(const TrainConfig& cfg, Index input_dim) {
  nets::NetConfig net = cfg.net;
  net.input_dim = input_dim;
  net.outcome_kind =
      cfg.loss_kind == LossKind::Bce ? nets::OutcomeKind::Binary : nets::OutcomeKind::Continuous;
  if (cfg.model_kind == ModelKind::TNet) {
    std::vector<Index> heads = net.rep_layers;
    heads.insert(heads.end(), net.head_layers.begin(), net.head_layers.end());
    net.head_layers = heads;
    net.rep_layers.clear();
    net.share_representation = false;
  } else {
    net.share_representation = true;
  }
  return net;
}

namespace {

struct Factual {
  grad::Var phi1, phi0;
  std::optional<grad::Var> l1, l0;
  LossParts parts;
  grad::Var sum;  // L1 + L0
};

Factual factual_terms(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                      const TrainConfig& cfg) {
  Factual f;
  f.phi1 = nets::forward_rep(model, tape.constant(batch.x1));
  f.phi0 = nets::forward_rep(model, tape.constant(batch.x0));
  grad::Var zero = tape.constant(Matrix::Zero(1, 1));
  grad::Var l1 = zero, l0 = zero;
  if (batch.x1.rows() > 0) {
    l1 = factual_loss(nets::forward_head(model, nets::Arm::Treated, f.phi1), column(tape, batch.y1),
                      cfg.loss_kind);
    f.l1 = l1;
  }
  if (batch.x0.rows() > 0) {
    l0 = factual_loss(nets::forward_head(model, nets::Arm::Control, f.phi0), column(tape, batch.y0),
                      cfg.loss_kind);
    f.l0 = l0;
  }
  f.parts.factual_treated = l1.item();
  f.parts.factual_control = l0.item();
  f.sum = grad::add(l1, l0);
  return f;
}

}  // namespace

TapeLoss crossnet_loss(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                       const TrainConfig& cfg) {
  Factual f = factual_terms(tape, model, batch, cfg);
  TapeLoss out{f.sum, f.parts};
  out.parts.total = f.sum.item();
  if (cfg.lambda == 0.0) return out;

  const Index n1 = batch.x1.rows();
  const Index n0 = batch.x0.rows();
  if (n1 < cfg.min_group_per_batch || n0 < cfg.min_group_per_batch) {
    out.parts.penalty_skipped = true;
    return out;
  }
  const auto& div = cfg.divergence;
  const auto rows = static_cast<std::size_t>(std::min(n0, n1));
  try {
    // Counterfactual predictions: y_1^0 = h0(Phi(x1)), y_0^1 = h1(Phi(x0)).
    grad::Var y10 = nets::forward_head(model, nets::Arm::Control, f.phi1);
    grad::Var y01 = nets::forward_head(model, nets::Arm::Treated, f.phi0);
    grad::Var y0 = column(tape, batch.y0);
    grad::Var y1 = column(tape, batch.y1);

    grad::Var c_phi0 = grad::self_correntropy(f.phi0, div.sigma);
    grad::Var c_phi1 = grad::self_correntropy(f.phi1, div.sigma);
    grad::Var cx0 = grad::add_diagonal(c_phi0, div.jitter);
    grad::Var cx1 = grad::add_diagonal(c_phi1, div.jitter);
    grad::Var dx_forward = bregman(cx0, cx1, div.flavor, rows);
    grad::Var dx_backward = div.symmetrize ? bregman(cx1, cx0, div.flavor, rows) : dx_forward;

    // D0: outcomes under control; D1: outcomes under treatment.
    grad::Var d0 = conditional_divergence(
        joint_correntropy(c_phi0, f.phi0, y0, div.sigma, div.jitter),
        joint_correntropy(c_phi1, f.phi1, y10, div.sigma, div.jitter), dx_forward, dx_backward,
        div, rows);
    grad::Var d1 = conditional_divergence(
        joint_correntropy(c_phi0, f.phi0, y01, div.sigma, div.jitter),
        joint_correntropy(c_phi1, f.phi1, y1, div.sigma, div.jitter), dx_forward, dx_backward,
        div, rows);

    grad::Var penalty = grad::scale(grad::add(d0, d1), cfg.lambda);
    out.total = grad::add(f.sum, penalty);
    out.parts.disc_y0 = d0.item();
    out.parts.disc_y1 = d1.item();
    out.parts.penalty = penalty.item();
    out.parts.total = out.total.item();
  } catch (const DegenerateMatrix&) {
    out.parts.penalty_skipped = true;
  }
  return out;
}

TapeLoss baseline_loss(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                       const TrainConfig& cfg) {
  if (cfg.model_kind == ModelKind::CrossNet) {
    throw InvalidArgument("baseline_loss called with a CrossNet configuration");
  }
  Factual f = factual_terms(tape, model, batch, cfg);
  TapeLoss out{f.sum, f.parts};
  out.parts.total = f.sum.item();
  if (cfg.model_kind != ModelKind::CFRNet || cfg.cfr_alpha == 0.0) return out;
  if (batch.x1.rows() == 0 || batch.x0.rows() == 0) {
    out.parts.penalty_skipped = true;
    return out;
  }
  // Linear MMD: squared distance between the group means of Phi.
  grad::Var gap = grad::sub(grad::col_mean(f.phi1), grad::col_mean(f.phi0));
  grad::Var penalty = grad::scale(grad::squared_norm(gap), cfg.cfr_alpha);
  out.total = grad::add(f.sum, penalty);
  out.parts.penalty = penalty.item();
  out.parts.total = out.total.item();
  return out;
}

TapeLoss objective(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                   const TrainConfig& cfg) {
  return cfg.model_kind == ModelKind::CrossNet ? crossnet_loss(tape, model, batch, cfg)
                                               : baseline_loss(tape, model, batch, cfg);
}

LossParts evaluate(const nets::ModelParams& params, const Batch& batch, const TrainConfig& cfg) {
  grad::Tape tape;
  const auto model = nets::bind(tape, params, false);
  return objective(tape, model, batch, cfg).parts;
}

LossGrad loss_and_grad(const nets::ModelParams& params, const Batch& batch,
                       const TrainConfig& cfg) {
  grad::Tape tape;
  const auto model = nets::bind(tape, params, true);
  TapeLoss loss = objective(tape, model, batch, cfg);
  LossGrad out;
  out.parts = loss.parts;
  if (loss.total.requires_grad()) {
    tape.backward(loss.total);
    out.grad = nets::collect_grad(tape, model);
  } else {
    out.grad = Vector::Zero(params.size());
  }
  return out;
}

Counterfactuals counterfactual_predict(const nets::ModelParams& params, const Matrix& x0,
                                       const Matrix& x1) {
  Counterfactuals c;
  c.treated_outcome_for_control =
      nets::forward_head(params, nets::Arm::Treated, nets::forward_rep(params, x0));
  c.control_outcome_for_treated =
      nets::forward_head(params, nets::Arm::Control, nets::forward_rep(params, x1));
  return c;
}

Vector predict_cate(const nets::ModelParams& params, const Matrix& x) {
  const Matrix phi = nets::forward_rep(params, x);
  return nets::forward_head(params, nets::Arm::Treated, phi) -
         nets::forward_head(params, nets::Arm::Control, phi);
}

std::vector<std::vector<Index>> stratified_batches(const std::vector<Index>& treated,
                                                   const std::vector<Index>& control,
                                                   Index batch_size) {
  const auto n1 = static_cast<Index>(treated.size());
  const auto n0 = static_cast<Index>(control.size());
  const Index n = n1 + n0;
  if (n == 0) return {};
  const Index n_batches = std::max<Index>(1, (n + batch_size - 1) / batch_size);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n_batches));
  for (Index k = 0; k < n_batches; ++k) {
    auto& b = out[static_cast<std::size_t>(k)];
    for (Index i = k * n1 / n_batches; i < (k + 1) * n1 / n_batches; ++i) {
      b.push_back(treated[static_cast<std::size_t>(i)]);
    }
    for (Index i = k * n0 / n_batches; i < (k + 1) * n0 / n_batches; ++i) {
      b.push_back(control[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

namespace {

TrainResult train_fixed(const SampleSet& train_in, const SampleSet& val_in,
                        const TrainConfig& cfg) {
  SampleSet train_set = train_in;
  SampleSet val_set = val_in;

  double y_mean = 0.0, y_scale = 1.0;
  const bool scale_outcome = cfg.standardize_outcome && cfg.loss_kind == LossKind::Mse;
  if (scale_outcome) {
    const double n = static_cast<double>(train_set.size());
    y_mean = train_set.y.mean();
    const double var = (train_set.y.array() - y_mean).square().sum() / std::max(n - 1.0, 1.0);
    y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    train_set.y = ((train_set.y.array() - y_mean) / y_scale).matrix();
    val_set.y = ((val_set.y.array() - y_mean) / y_scale).matrix();
  }

  TrainConfig run = cfg;
  nets::ModelParams params =
      nets::init_params(effective_net_config(cfg, train_set.x.cols()), stream_seed(cfg.seed, kInit));
  nets::OptState opt = nets::OptState::for_size(params.size(), cfg.learning_rate);
  std::mt19937_64 rng(stream_seed(cfg.seed, kBatches));

  std::vector<Index> treated = train_set.group(1);
  std::vector<Index> control = train_set.group(0);

  if (cfg.sigma_mode == SigmaMode::Median && cfg.uses_divergence()) {
    // Probe: initial representation and outcomes of the first training rows.
    std::vector<Index> probe;
    for (Index i = 0; i < std::min<Index>(train_set.size(), cfg.batch_size); ++i) probe.push_back(i);
    const SampleSet p = train_set.subset(probe);
    Matrix z(p.size(), params.config.rep_dim() + 1);
    z << nets::forward_rep(params, p.x), p.y;
    run.divergence.sigma = matdiv::median_heuristic_sigma(z);
  }

  const auto val_batches_idx =
      stratified_batches(val_set.group(1), val_set.group(0), cfg.batch_size);
  std::vector<Batch> val_batches;
  for (const auto& rows : val_batches_idx) val_batches.push_back(make_batch(val_set, rows));
  auto validate_params = [&](const nets::ModelParams& p) {
    std::vector<LossParts> parts;
    for (const auto& b : val_batches) parts.push_back(evaluate(p, b, run));
    return mean_parts(parts);
  };

  TrainResult result;
  result.history.lambda = run.lambda;
  result.history.sigma = run.divergence.sigma;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(treated.begin(), treated.end(), rng);
    std::shuffle(control.begin(), control.end(), rng);
    const auto batches = stratified_batches(treated, control, cfg.batch_size);

    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<LossParts> parts;
    for (const auto& rows : batches) {
      const Batch batch = make_batch(train_set, rows);
      LossGrad lg = loss_and_grad(params, batch, run);
      if (!std::isfinite(lg.parts.total)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << " (L1=" << lg.parts.factual_treated
            << ", L0=" << lg.parts.factual_control << ", D0=" << lg.parts.disc_y0
            << ", D1=" << lg.parts.disc_y1 << ")";
        throw NumericalAbort(msg.str());
      }
      nets::adam_step(params.values, lg.grad, opt);
      if (lg.parts.penalty_skipped && run.uses_divergence()) ++rec.skipped_batches;
      if (cfg.record_batches) result.history.batches.push_back(lg.parts);
      parts.push_back(lg.parts);
    }
    rec.n_batches = static_cast<int>(batches.size());
    rec.train = mean_parts(parts);
    rec.val = validate_params(params);
    if (!std::isfinite(rec.val.total)) {
      throw NumericalAbort("non-finite validation objective at epoch " + std::to_string(epoch));
    }
    if (cfg.full_sample_penalty && run.uses_divergence()) {
      const LossParts full = evaluate(params, make_batch(train_set, [&] {
        std::vector<Index> all(static_cast<std::size_t>(train_set.size()));
        for (Index i = 0; i < train_set.size(); ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
      }()), run);
      if (!full.penalty_skipped) rec.full_sample_penalty = std::max(0.0, full.penalty);
    }
    result.history.skipped_penalty_batches += rec.skipped_batches;
    if (run.uses_divergence() && rec.n_batches > 0 && rec.skipped_batches == rec.n_batches) {
      result.history.warnings.push_back("epoch " + std::to_string(epoch) +
                                        ": divergence penalty skipped in every batch");
    }
    result.history.epochs.push_back(rec);

    if (rec.val.total < best) {
      best = rec.val.total;
      since_best = 0;
      result.history.best_epoch = epoch;
      result.history.best_val_total = best;
      result.params = params;
    } else if (++since_best >= cfg.patience) {
      result.history.stop_reason = "early stopping: no validation improvement for " +
                                   std::to_string(cfg.patience) + " epochs";
      break;
    }
  }
  if (result.history.stop_reason.empty()) result.history.stop_reason = "reached max_epochs";
  if (scale_outcome) fold_outcome_scaling(result.params, y_mean, y_scale);
  return result;
}

double best_val_factual(const TrainHistory& h) {
  const auto& rec = h.epochs.at(static_cast<std::size_t>(h.best_epoch));
  return rec.val.factual_treated + rec.val.factual_control;
}

}  // namespace

TrainResult train(const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& cfg) {
  cfg.validate();
  train_set.validate();
  val_set.validate();
  if (train_set.n_treated() < 2 || train_set.n_control() < 2) {
    throw InsufficientSample("training data needs at least 2 units per group");
  }
  if (val_set.size() == 0) throw InsufficientSample("validation split is empty");
  if (cfg.lambda_grid.empty() || cfg.model_kind != ModelKind::CrossNet) {
    return train_fixed(train_set, val_set, cfg);
  }
  std::optional<TrainResult> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (double lambda : cfg.lambda_grid) {
    TrainConfig c = cfg;
    c.lambda = lambda;
    c.lambda_grid.clear();
    TrainResult r = train_fixed(train_set, val_set, c);
    const double score = best_val_factual(r.history);
    if (!best || score < best_score) {
      best_score = score;
      best = std::move(r);
    }
  }
  return std::move(*best);
}

TrainResult train(const SampleSet& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.n_treated() < 2 || data.n_control() < 2) {
    throw InsufficientSample("training data needs at least 2 units per group");
  }
  const Holdout h = stratified_holdout(data, cfg.val_fraction, stream_seed(cfg.seed, kSplit));
  return train(data.subset(h.train), data.subset(h.val), cfg);
}

}  // namespace crossnet::train
