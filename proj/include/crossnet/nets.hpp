#pragma once

// Representation network Phi and the two hypothesis heads h1 (treated) and
// h0 (control), stored as one flat parameter vector, plus the Adam optimizer.

#include <cstdint>
#include <vector>

#include "crossnet/grad.hpp"
#include "crossnet/types.hpp"

namespace crossnet::nets {

enum class Activation { ELU, ReLU };
enum class OutcomeKind { Continuous, Binary };
enum class Arm { Treated, Control };

struct NetConfig {
  Index input_dim = 1;
  std::vector<Index> rep_layers{200, 200, 200};
  std::vector<Index> head_layers{100, 100, 100};
  Activation activation = Activation::ELU;
  OutcomeKind outcome_kind = OutcomeKind::Continuous;
  // false is only valid with an empty rep_layers (each head then sees the raw
  // covariates; this is the TNet configuration).
  bool share_representation = true;

  // Width of Phi: last rep layer, or input_dim for the identity representation.
  Index rep_dim() const;
  void validate() const;
};

// One affine layer inside the flat parameter vector: W (in x out, column
// major) at `offset`, followed by the bias (out).
struct LayerShape {
  Index in = 0;
  Index out = 0;
  Index offset = 0;

  Index weight_count() const { return in * out; }
  Index size() const { return in * out + out; }
};

struct ModelParams {
  NetConfig config;
  std::vector<LayerShape> rep;
  std::vector<LayerShape> head1;
  std::vector<LayerShape> head0;
  Vector values;

  Index size() const { return values.size(); }
  // Contiguous segments of `values`.
  Eigen::VectorBlock<const Vector> rep_weights() const;
  Eigen::VectorBlock<const Vector> head1_weights() const;
  Eigen::VectorBlock<const Vector> head0_weights() const;
  const std::vector<LayerShape>& head(Arm arm) const {
    return arm == Arm::Treated ? head1 : head0;
  }
};

// Closed-form parameter count for a configuration.
Index parameter_count(const NetConfig& cfg);

// Layer layout with all values zero.
ModelParams zero_params(const NetConfig& cfg);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_params(const NetConfig& cfg, std::uint64_t seed);

Matrix forward_rep(const ModelParams& params, const Matrix& x);
Vector forward_head(const ModelParams& params, Arm arm, const Matrix& phi);

// Parameters bound as leaves on a tape, one (W, b) pair per layer.
struct TapeLayer {
  grad::Var weight;
  grad::Var bias;
};
struct TapeModel {
  std::vector<TapeLayer> rep;
  std::vector<TapeLayer> head1;
  std::vector<TapeLayer> head0;
  const ModelParams* params = nullptr;

  const std::vector<TapeLayer>& head(Arm arm) const {
    return arm == Arm::Treated ? head1 : head0;
  }
};

TapeModel bind(grad::Tape& tape, const ModelParams& params, bool requires_grad);
grad::Var forward_rep(const TapeModel& model, grad::Var x);
// n x 1 predictions: linear for continuous outcomes, sigmoid for binary.
grad::Var forward_head(const TapeModel& model, Arm arm, grad::Var phi);
// Gradient of the last backward() pass laid out like params.values.
Vector collect_grad(const grad::Tape& tape, const TapeModel& model);

struct OptState {
  Vector m;
  Vector v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptState for_size(Index n, double lr = 1e-3);
};

// Bias-corrected Adam update. Throws NumericalAbort on a non-finite gradient
// (parameters and state are left untouched).
void adam_step(Vector& params, const Vector& grads, OptState& state);

}  // namespace crossnet::nets
