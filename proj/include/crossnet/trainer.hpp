#pragma once

// Objectives and the training loop for CrossNet and the shared-architecture
// baselines (TNet, TARNet, CFRNet).
//
// CrossNet objective per mini-batch, with treated rows (x1, y1) and control
// rows (x0, y0):
//   L1 = l(h1(Phi(x1)), y1)            L0 = l(h0(Phi(x0)), y0)
//   D0 = Disc([Phi(x0), y0]          -> [Phi(x1), h0(Phi(x1))])
//   D1 = Disc([Phi(x0), h1(Phi(x0))] -> [Phi(x1), y1])
//   total = L1 + L0 + lambda * (D0 + D1)
// where Disc is matdiv::cond_divergence with the control group as the first
// argument. Gradients flow through the predicted counterfactuals, so control
// rows train h1 (and treated rows train h0) through the penalty.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossnet/grad.hpp"
#include "crossnet/matdiv.hpp"
#include "crossnet/nets.hpp"
#include "crossnet/sample_set.hpp"

namespace crossnet::train {

enum class ModelKind { CrossNet, TNet, TARNet, CFRNet };
enum class LossKind { Mse, Bce };
enum class SigmaMode { Fixed, Median };

struct TrainConfig {
  ModelKind model_kind = ModelKind::CrossNet;
  double lambda = 1.0;
  // When nonempty, one model is trained per value and the one with the lowest
  // validation factual loss is kept (CrossNet only).
  std::vector<double> lambda_grid;
  matdiv::DivergenceConfig divergence;
  SigmaMode sigma_mode = SigmaMode::Fixed;
  double cfr_alpha = 1.0;
  LossKind loss_kind = LossKind::Mse;

  // Architecture; input_dim is taken from the data.
  nets::NetConfig net;
  double learning_rate = 1e-3;

  Index batch_size = 128;
  int max_epochs = 300;
  int patience = 10;
  double val_fraction = 0.3;
  Index min_group_per_batch = 4;
  // Standardize continuous outcomes with training statistics; the scaling is
  // folded back into the output layers of the returned model.
  bool standardize_outcome = true;

  bool record_batches = false;
  // Evaluate the divergence penalty on the whole training split once per epoch.
  bool full_sample_penalty = false;

  std::uint64_t seed = 0;

  bool uses_divergence() const { return model_kind == ModelKind::CrossNet && lambda > 0.0; }
  void validate() const;
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct LossParts {
  double factual_treated = 0.0;  // L1
  double factual_control = 0.0;  // L0
  double disc_y0 = 0.0;          // D0
  double disc_y1 = 0.0;          // D1
  double penalty = 0.0;          // lambda (D0 + D1) or the CFRNet balancing term
  double total = 0.0;
  bool penalty_skipped = false;
};

struct EpochRecord {
  int epoch = 0;
  LossParts train;  // mean over batches
  LossParts val;
  int n_batches = 0;
  int skipped_batches = 0;
  std::optional<double> full_sample_penalty;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<LossParts> batches;  // only with record_batches
  int best_epoch = -1;
  double best_val_total = 0.0;
  std::string stop_reason;
  std::vector<std::string> warnings;
  int skipped_penalty_batches = 0;
  double lambda = 0.0;
  double sigma = 0.0;
};

struct TrainResult {
  nets::ModelParams params;
  TrainHistory history;
};

// Treated and control rows of one mini-batch; outcomes as n x 1 columns.
struct Batch {
  Matrix x1;
  Vector y1;
  Matrix x0;
  Vector y0;
};

Batch make_batch(const SampleSet& data, const std::vector<Index>& rows);

// Differentiable loss on a tape together with its scalar parts.
struct TapeLoss {
  grad::Var total;
  LossParts parts;
};

// The network configuration actually trained for cfg.model_kind (TNet moves
// the representation layers into two unshared heads).
nets::NetConfig effective_net_config(const TrainConfig& cfg, Index input_dim);

TapeLoss crossnet_loss(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                       const TrainConfig& cfg);
TapeLoss baseline_loss(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                       const TrainConfig& cfg);
// Dispatches on cfg.model_kind.
TapeLoss objective(grad::Tape& tape, const nets::TapeModel& model, const Batch& batch,
                   const TrainConfig& cfg);

// Loss parts without gradients.
LossParts evaluate(const nets::ModelParams& params, const Batch& batch, const TrainConfig& cfg);

struct LossGrad {
  LossParts parts;
  Vector grad;
};
LossGrad loss_and_grad(const nets::ModelParams& params, const Batch& batch,
                       const TrainConfig& cfg);

// y_0^1 = h1(Phi(x0)) for control rows and y_1^0 = h0(Phi(x1)) for treated rows.
struct Counterfactuals {
  Vector treated_outcome_for_control;
  Vector control_outcome_for_treated;
};
Counterfactuals counterfactual_predict(const nets::ModelParams& params, const Matrix& x0,
                                       const Matrix& x1);

// h1(Phi(x)) - h0(Phi(x)); probability scale for binary outcomes.
Vector predict_cate(const nets::ModelParams& params, const Matrix& x);

// Stratified mini-batches over the given treated and control row indices.
// Each batch receives an even share of both groups.
std::vector<std::vector<Index>> stratified_batches(const std::vector<Index>& treated,
                                                   const std::vector<Index>& control,
                                                   Index batch_size);

TrainResult train(const SampleSet& data, const TrainConfig& cfg);

// Train on explicit train/validation sets (no internal split).
TrainResult train(const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& cfg);

}  // namespace crossnet::train
