#pragma once

#include "fedsim/data.hpp"
#include "fedsim/math.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedsim {

// Dense feed-forward network, ReLU between layers, linear output layer.
//
// All parameters live in one flat vector so that model deltas, averaging and
// finite-difference probes are plain vector operations. Layer l occupies
// [W_l (out x in, column-major), b_l (out)] in order; the output-layer bias is
// therefore the trailing C entries.
class MlpModel {
 public:
  MlpModel() = default;
  // widths = {input, hidden..., num_classes}; at least {input, num_classes}.
  explicit MlpModel(std::vector<Index> widths);

  static MlpModel zeros(std::vector<Index> widths) { return MlpModel(std::move(widths)); }
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static MlpModel random(std::vector<Index> widths, Rng& rng);

  Index num_layers() const noexcept { return static_cast<Index>(widths_.size()) - 1; }
  Index input_dim() const noexcept { return widths_.front(); }
  Index num_classes() const noexcept { return widths_.back(); }
  // Width L of the signal feeding the output layer.
  Index penultimate_width() const noexcept { return widths_[widths_.size() - 2]; }
  Index num_parameters() const noexcept { return params_.size(); }
  const std::vector<Index>& widths() const noexcept { return widths_; }

  Eigen::Map<const Matrix> weight(Index layer) const;
  Eigen::Map<Matrix> weight(Index layer);
  Eigen::Map<const Vector> bias(Index layer) const;
  Eigen::Map<Vector> bias(Index layer);

  Index weight_offset(Index layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  Index bias_offset(Index layer) const { return weight_offset(layer) + widths_[layer + 1] * widths_[layer]; }
  Index output_bias_offset() const { return bias_offset(num_layers() - 1); }

  const Vector& parameters() const noexcept { return params_; }
  Vector& parameters() noexcept { return params_; }

  bool operator==(const MlpModel&) const = default;

 private:
  std::vector<Index> widths_;
  std::vector<Index> offsets_;
  Vector params_;
};

struct ForwardResult {
  Vector logits;  // q
  Vector probs;   // softmax(q)
  Vector hidden;  // z, the input of the output layer
};

ForwardResult forward(const MlpModel& model, const Eigen::Ref<const Vector>& x);

inline constexpr double kProbFloor = 1e-12;

// -ln s_y with s_y clamped at 1e-12.
double ce_loss(const Eigen::Ref<const Vector>& probs, Index label);

// Per-sample gradient of the cross-entropy w.r.t. the output bias:
// s_i for i != y and -(1 - s_y) for i == y.
template <typename Derived>
VectorX<typename Derived::Scalar> bias_grad_closed_form(const Eigen::MatrixBase<Derived>& probs, Index label) {
  using S = typename Derived::Scalar;
  VectorX<S> g = probs;
  S others = 0;
  for (Index c = 0; c < g.size(); ++c)
    if (c != label) others += g(c);
  g(label) = -others;
  return g;
}

// Full flat gradient of ce_loss for a single sample.
Vector backward(const MlpModel& model, const Eigen::Ref<const Vector>& x, Index label);

struct BatchGradient {
  Vector grad;          // mean over the batch
  double loss_sum = 0;  // summed per-sample cross-entropy
};

// Mean gradient over the rows of ds listed in rows.
BatchGradient batch_gradient(const MlpModel& model, const ClientDataset& ds, std::span<const std::size_t> rows);
// Mean gradient over the whole dataset.
BatchGradient full_gradient(const MlpModel& model, const ClientDataset& ds);

// Softmax outputs for every row, C x n.
Matrix predict_probs(const MlpModel& model, const FeatureMatrix& x);

enum class OptimizerKind { Sgd, SgdMomentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int local_epochs = 2;
  int batch_size = 64;
  OptimizerConfig optimizer;
  // FedProx proximal weight; 0 disables.
  double prox_mu = 0.0;

  void validate() const;
};

struct LocalUpdate {
  Vector delta_theta;
  Vector delta_b;
  // Mean cross-entropy over the samples of the final local epoch.
  double train_loss = 0;
};

// R local epochs of shuffled mini-batch training starting from global_model.
LocalUpdate local_update(const MlpModel& global_model, const ClientDataset& dataset, const TrainConfig& cfg,
                         std::uint64_t seed);

}  // namespace fedsim
