#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedsim {

MlpModel::MlpModel(std::vector<Index> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("model needs at least an input and an output width");
  for (Index w : widths_)
    if (w < 1) throw ConfigError("layer widths must be positive");
  Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_ = Vector::Zero(total);
}

MlpModel MlpModel::random(std::vector<Index> widths, Rng& rng) {
  MlpModel m(std::move(widths));
  for (Index l = 0; l < m.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.widths_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : m.weight(l).reshaped()) w = u(rng);
    for (auto& b : m.bias(l)) b = u(rng);
  }
  return m;
}

Eigen::Map<const Matrix> MlpModel::weight(Index layer) const {
  return {params_.data() + weight_offset(layer), widths_[layer + 1], widths_[layer]};
}
Eigen::Map<Matrix> MlpModel::weight(Index layer) {
  return {params_.data() + weight_offset(layer), widths_[layer + 1], widths_[layer]};
}
Eigen::Map<const Vector> MlpModel::bias(Index layer) const {
  return {params_.data() + bias_offset(layer), widths_[layer + 1]};
}
Eigen::Map<Vector> MlpModel::bias(Index layer) {
  return {params_.data() + bias_offset(layer), widths_[layer + 1]};
}

ForwardResult forward(const MlpModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.input_dim())
    throw ConfigError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(model.input_dim()));
  Vector a = x;
  for (Index l = 0; l + 1 < model.num_layers(); ++l)
    a = (model.weight(l) * a + model.bias(l)).cwiseMax(0.0);
  ForwardResult out;
  const Index last = model.num_layers() - 1;
  out.logits = model.weight(last) * a + model.bias(last);
  out.probs = softmax(out.logits);
  out.hidden = std::move(a);
  return out;
}

double ce_loss(const Eigen::Ref<const Vector>& probs, Index label) {
  return -std::log(std::max(probs(label), kProbFloor));
}

namespace {

// Forward + backward over a d x B block of column samples.
BatchGradient gradient_block(const MlpModel& model, const Matrix& inputs, std::span<const int> labels) {
  const Index layers = model.num_layers();
  const Index batch = inputs.cols();
  std::vector<Matrix> activations;  // input of each layer
  std::vector<Matrix> pre;          // pre-activation of each layer
  activations.reserve(static_cast<std::size_t>(layers));
  pre.reserve(static_cast<std::size_t>(layers));
  activations.push_back(inputs);
  for (Index l = 0; l < layers; ++l) {
    Matrix z = model.weight(l) * activations.back();
    z.colwise() += model.bias(l);
    pre.push_back(std::move(z));
    if (l + 1 < layers) activations.push_back(pre.back().cwiseMax(0.0));
  }

  Matrix delta = softmax_columns(pre.back());
  BatchGradient out;
  for (Index j = 0; j < batch; ++j) {
    const Index y = labels[static_cast<std::size_t>(j)];
    out.loss_sum -= std::log(std::max(delta(y, j), kProbFloor));
    delta(y, j) -= 1.0;
  }
  delta /= static_cast<double>(batch);

  MlpModel grad(model.widths());
  for (Index l = layers - 1; l >= 0; --l) {
    grad.weight(l).noalias() = delta * activations[static_cast<std::size_t>(l)].transpose();
    grad.bias(l) = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = model.weight(l).transpose() * delta;
      delta = back.cwiseProduct((pre[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>().matrix());
    }
  }
  out.grad = std::move(grad.parameters());
  return out;
}

}  // namespace

Vector backward(const MlpModel& model, const Eigen::Ref<const Vector>& x, Index label) {
  if (x.size() != model.input_dim()) throw ConfigError("input dimension mismatch in backward");
  const int y = static_cast<int>(label);
  return gradient_block(model, Matrix(x), std::span<const int>(&y, 1)).grad;
}

BatchGradient batch_gradient(const MlpModel& model, const ClientDataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DomainError("gradient of an empty batch");
  if (ds.dim() != model.input_dim()) throw ConfigError("dataset dimension does not match model input");
  Matrix inputs(ds.dim(), static_cast<Index>(rows.size()));
  std::vector<int> labels(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    inputs.col(static_cast<Index>(j)) = ds.features.row(static_cast<Index>(rows[j])).transpose();
    labels[j] = ds.labels[rows[j]];
  }
  return gradient_block(model, inputs, labels);
}

BatchGradient full_gradient(const MlpModel& model, const ClientDataset& ds) {
  if (ds.empty()) throw DomainError("gradient of an empty dataset");
  if (ds.dim() != model.input_dim()) throw ConfigError("dataset dimension does not match model input");
  return gradient_block(model, ds.features.transpose(), ds.labels);
}

Matrix predict_probs(const MlpModel& model, const FeatureMatrix& x) {
  if (x.cols() != model.input_dim()) throw ConfigError("dataset dimension does not match model input");
  Matrix a = x.transpose();
  for (Index l = 0; l < model.num_layers(); ++l) {
    Matrix z = model.weight(l) * a;
    z.colwise() += model.bias(l);
    a = (l + 1 < model.num_layers()) ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return softmax_columns(a);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(prox_mu >= 0)) throw ConfigError("prox_mu must be >= 0");
  if (optimizer.kind == OptimizerKind::SgdMomentum && !(optimizer.momentum >= 0 && optimizer.momentum < 1))
    throw ConfigError("momentum must lie in [0, 1)");
  if (optimizer.kind == OptimizerKind::Adam &&
      !(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1 &&
        optimizer.epsilon > 0))
    throw ConfigError("adam betas must lie in [0, 1) and epsilon > 0");
}

LocalUpdate local_update(const MlpModel& global_model, const ClientDataset& dataset, const TrainConfig& cfg,
                         std::uint64_t seed) {
  if (dataset.empty()) throw DomainError("local update on an empty dataset");
  cfg.validate();
  Rng rng(seed);
  MlpModel model = global_model;
  Vector& theta = model.parameters();
  const Vector& anchor = global_model.parameters();
  const Index dim = theta.size();

  Vector first_moment = Vector::Zero(dim);
  Vector second_moment;
  if (cfg.optimizer.kind == OptimizerKind::Adam) second_moment = Vector::Zero(dim);
  long step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  double last_epoch_loss = 0;

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      BatchGradient g = batch_gradient(model, dataset, std::span(order).subspan(begin, end - begin));
      epoch_loss += g.loss_sum;
      if (cfg.prox_mu > 0) g.grad += cfg.prox_mu * (theta - anchor);
      ++step;
      switch (cfg.optimizer.kind) {
        case OptimizerKind::Sgd:
          theta -= cfg.learning_rate * g.grad;
          break;
        case OptimizerKind::SgdMomentum: {
          // m_1 = g_1, m_s = mu m_{s-1} + (1 - mu) g_s.
          const double mu = cfg.optimizer.momentum;
          if (step == 1)
            first_moment = g.grad;
          else
            first_moment = mu * first_moment + (1.0 - mu) * g.grad;
          theta -= cfg.learning_rate * first_moment;
          break;
        }
        case OptimizerKind::Adam: {
          const auto& o = cfg.optimizer;
          first_moment = o.beta1 * first_moment + (1.0 - o.beta1) * g.grad;
          second_moment = o.beta2 * second_moment + (1.0 - o.beta2) * g.grad.cwiseAbs2();
          const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
          theta.array() -= cfg.learning_rate * (first_moment.array() / c1) /
                           ((second_moment.array() / c2).sqrt() + o.epsilon);
          break;
        }
      }
    }
    last_epoch_loss = epoch_loss / static_cast<double>(order.size());
  }

  LocalUpdate out;
  out.delta_theta = theta - anchor;
  out.delta_b = out.delta_theta.tail(global_model.num_classes());
  out.train_loss = last_epoch_loss;
  return out;
}

}  // namespace fedsim
