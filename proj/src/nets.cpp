#include "crossnet/nets.hpp"

#include <cmath>
#include <random>
#include <string>

#include "crossnet/errors.hpp"

namespace crossnet::nets {

Index NetConfig::rep_dim() const {
  return rep_layers.empty() ? input_dim : rep_layers.back();
}

void NetConfig::validate() const {
  if (input_dim < 1) throw InvalidArgument("input_dim must be positive");
  for (Index w : rep_layers) {
    if (w < 1) throw InvalidArgument("representation widths must be positive");
  }
  for (Index w : head_layers) {
    if (w < 1) throw InvalidArgument("head widths must be positive");
  }
  if (!share_representation && !rep_layers.empty()) {
    throw InvalidArgument("an unshared representation must have no layers");
  }
}

namespace {

std::vector<LayerShape> chain(Index in, const std::vector<Index>& widths, bool output_unit,
                              Index& offset) {
  std::vector<LayerShape> layers;
  Index prev = in;
  auto push = [&](Index out) {
    layers.push_back(LayerShape{prev, out, offset});
    offset += prev * out + out;
    prev = out;
  };
  for (Index w : widths) push(w);
  if (output_unit) push(1);
  return layers;
}

Index segment_begin(const std::vector<LayerShape>& layers, Index fallback) {
  return layers.empty() ? fallback : layers.front().offset;
}

Index segment_size(const std::vector<LayerShape>& layers) {
  Index total = 0;
  for (const auto& l : layers) total += l.size();
  return total;
}

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::ReLU) return z.cwiseMax(0.0);
  return (z.array() > 0.0).select(z.array(), z.array().exp() - 1.0).matrix();
}

Matrix dense(const Vector& values, const LayerShape& l, const Matrix& x) {
  const Eigen::Map<const Matrix> w(values.data() + l.offset, l.in, l.out);
  const Eigen::Map<const Eigen::RowVectorXd> b(values.data() + l.offset + l.weight_count(),
                                               l.out);
  Matrix out = x * w;
  out.rowwise() += b;
  return out;
}

std::vector<TapeLayer> bind_layers(grad::Tape& tape, const Vector& values,
                                   const std::vector<LayerShape>& layers, bool requires_grad) {
  std::vector<TapeLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    Matrix w = Eigen::Map<const Matrix>(values.data() + l.offset, l.in, l.out);
    Matrix b = Eigen::Map<const Matrix>(values.data() + l.offset + l.weight_count(), 1, l.out);
    out.push_back(TapeLayer{tape.leaf(std::move(w), requires_grad),
                            tape.leaf(std::move(b), requires_grad)});
  }
  return out;
}

grad::Var tape_activate(grad::Var z, Activation act) {
  return act == Activation::ReLU ? grad::relu(z) : grad::elu(z);
}

void collect_layers(const grad::Tape& tape, const std::vector<TapeLayer>& vars,
                    const std::vector<LayerShape>& layers, Vector& out) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const Matrix gw = tape.grad(vars[k].weight);
    const Matrix gb = tape.grad(vars[k].bias);
    Eigen::Map<Matrix>(out.data() + l.offset, l.in, l.out) = gw;
    Eigen::Map<Matrix>(out.data() + l.offset + l.weight_count(), 1, l.out) = gb;
  }
}

}  // namespace

Eigen::VectorBlock<const Vector> ModelParams::rep_weights() const {
  return values.segment(segment_begin(rep, 0), segment_size(rep));
}
Eigen::VectorBlock<const Vector> ModelParams::head1_weights() const {
  return values.segment(segment_begin(head1, 0), segment_size(head1));
}
Eigen::VectorBlock<const Vector> ModelParams::head0_weights() const {
  return values.segment(segment_begin(head0, 0), segment_size(head0));
}

ModelParams zero_params(const NetConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  Index offset = 0;
  p.rep = chain(cfg.input_dim, cfg.rep_layers, false, offset);
  p.head1 = chain(cfg.rep_dim(), cfg.head_layers, true, offset);
  p.head0 = chain(cfg.rep_dim(), cfg.head_layers, true, offset);
  p.values = Vector::Zero(offset);
  return p;
}

Index parameter_count(const NetConfig& cfg) { return zero_params(cfg).size(); }

ModelParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](const std::vector<LayerShape>& layers) {
    for (const auto& l : layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Index k = 0; k < l.weight_count(); ++k) p.values[l.offset + k] = dist(rng);
    }
  };
  fill(p.rep);
  fill(p.head1);
  fill(p.head0);
  return p;
}

Matrix forward_rep(const ModelParams& params, const Matrix& x) {
  if (x.cols() != params.config.input_dim) {
    throw InvalidArgument("forward_rep: expected " + std::to_string(params.config.input_dim) +
                          " columns, got " + std::to_string(x.cols()));
  }
  Matrix h = x;
  for (const auto& l : params.rep) h = activate(dense(params.values, l, h), params.config.activation);
  return h;
}

Vector forward_head(const ModelParams& params, Arm arm, const Matrix& phi) {
  if (phi.cols() != params.config.rep_dim()) {
    throw InvalidArgument("forward_head: representation width mismatch");
  }
  const auto& layers = params.head(arm);
  Matrix h = phi;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    h = dense(params.values, layers[k], h);
    if (k + 1 < layers.size()) h = activate(h, params.config.activation);
  }
  Vector out = h.col(0);
  if (params.config.outcome_kind == OutcomeKind::Binary) {
    out = (1.0 / (1.0 + (-out.array()).exp())).matrix();
  }
  return out;
}

TapeModel bind(grad::Tape& tape, const ModelParams& params, bool requires_grad) {
  TapeModel m;
  m.params = &params;
  m.rep = bind_layers(tape, params.values, params.rep, requires_grad);
  m.head1 = bind_layers(tape, params.values, params.head1, requires_grad);
  m.head0 = bind_layers(tape, params.values, params.head0, requires_grad);
  return m;
}

grad::Var forward_rep(const TapeModel& model, grad::Var x) {
  const auto& cfg = model.params->config;
  if (x.cols() != cfg.input_dim) throw InvalidArgument("forward_rep: input width mismatch");
  grad::Var h = x;
  for (const auto& l : model.rep) h = tape_activate(grad::affine(h, l.weight, l.bias), cfg.activation);
  return h;
}

grad::Var forward_head(const TapeModel& model, Arm arm, grad::Var phi) {
  const auto& cfg = model.params->config;
  if (phi.cols() != cfg.rep_dim()) throw InvalidArgument("forward_head: width mismatch");
  const auto& layers = model.head(arm);
  grad::Var h = phi;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    h = grad::affine(h, layers[k].weight, layers[k].bias);
    if (k + 1 < layers.size()) h = tape_activate(h, cfg.activation);
  }
  if (cfg.outcome_kind == OutcomeKind::Binary) h = grad::sigmoid(h);
  return h;
}

Vector collect_grad(const grad::Tape& tape, const TapeModel& model) {
  const ModelParams& p = *model.params;
  Vector out = Vector::Zero(p.size());
  collect_layers(tape, model.rep, p.rep, out);
  collect_layers(tape, model.head1, p.head1, out);
  collect_layers(tape, model.head0, p.head0, out);
  return out;
}

OptState OptState::for_size(Index n, double lr) {
  OptState s;
  s.m = Vector::Zero(n);
  s.v = Vector::Zero(n);
  s.lr = lr;
  return s;
}

void adam_step(Vector& params, const Vector& grads, OptState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and moment lengths differ");
  }
  if (!grads.allFinite()) {
    Index bad = 0;
    for (Index i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        bad = i;
        break;
      }
    }
    throw NumericalAbort("adam_step: non-finite gradient at parameter " + std::to_string(bad) +
                         " (step " + std::to_string(state.step) + ")");
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace crossnet::nets
