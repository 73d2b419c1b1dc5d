#include "fedsim/estimator.hpp"

#include "fedsim/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fedsim {

void EstimatorConfig::validate() const {
  if (!(temperature > 0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
}

double estimate_entropy(const Eigen::Ref<const Vector>& delta_b, const EstimatorConfig& cfg) {
  cfg.validate();
  if (!delta_b.allFinite()) throw DomainError("bias update has non-finite entries");
  return entropy(softmax(delta_b, cfg.temperature));
}

ConfusionAverages confusion_averages(const MlpModel& model, const ClientDataset& ds) {
  const Index num_classes = model.num_classes();
  if (ds.num_classes() != num_classes) throw ConfigError("dataset and model disagree on the number of classes");
  for (Index i = 0; i < num_classes; ++i)
    if (ds.class_counts[static_cast<std::size_t>(i)] == static_cast<std::size_t>(ds.size()))
      throw DomainError("class " + std::to_string(i) + " owns every sample; confusion average undefined");

  const Matrix probs = predict_probs(model, ds.features);
  // Sum of s_i over all samples minus the sum over samples labelled i.
  const Vector total = probs.rowwise().sum();
  Vector own = Vector::Zero(num_classes);
  for (Index j = 0; j < ds.size(); ++j) {
    const Index y = ds.labels[static_cast<std::size_t>(j)];
    own(y) += probs(y, j);
  }
  ConfusionAverages out;
  out.e.resize(num_classes);
  for (Index i = 0; i < num_classes; ++i) {
    const double others = static_cast<double>(ds.size()) - static_cast<double>(ds.class_counts[static_cast<std::size_t>(i)]);
    out.e(i) = std::clamp((total(i) - own(i)) / others, 0.0, 1.0);
  }
  const double mean = out.e.mean();
  out.delta = (out.e.array() - mean).abs().maxCoeff();
  return out;
}

Vector expected_bias_update(const LabelDistribution& dist, const ConfusionAverages& conf, double learning_rate,
                            int local_epochs) {
  if (dist.probs.size() != conf.e.size()) throw ConfigError("distribution and confusion averages differ in size");
  const double scale = learning_rate * local_epochs;
  return scale * (dist.probs * conf.e.sum() - conf.e);
}

double theorem1_rhs(const LabelDistribution& balanced, const LabelDistribution& imbalanced,
                    const ConfusionAverages& conf, double learning_rate, int local_epochs, double temperature) {
  const Index c = conf.e.size();
  if (balanced.probs.size() != c || imbalanced.probs.size() != c)
    throw ConfigError("distribution sizes must match the number of classes");
  const double classes = static_cast<double>(c);
  const double step = learning_rate * local_epochs;
  const Vector u = Vector::Constant(c, 1.0 / classes);
  const double lead = step * conf.e.sum() / (classes * temperature);
  const double spread = (imbalanced.probs - u).squaredNorm();
  const double sup = (balanced.probs - u).cwiseAbs().maxCoeff();
  const double coeff = step * (step + classes * classes * temperature * std::log(classes)) /
                       (classes * classes * temperature * temperature);
  return 0.5 * lead * lead * spread - (step / temperature) * sup - coeff * conf.delta;
}

void EnvelopeParams::validate() const {
  if (!(beta > 0)) throw ConfigError("envelope beta must be > 0");
  if (!(rho > 0 && kappa > rho)) throw ConfigError("envelope requires kappa > rho > 0");
}

double EnvelopeParams::curve(double entropy, Index num_classes) const {
  return -std::exp(beta * (entropy - std::log(static_cast<double>(num_classes)))) * rho + kappa;
}

std::vector<ScatterPoint> assumption_scatter(const std::vector<ClientDataset>& clients, const ClientDataset& pooled,
                                             const MlpModel& model, double learning_rate, int round) {
  for (const auto& c : clients)
    if (c.empty()) throw DomainError("assumption scatter requires non-empty client datasets");
  const Vector truth = learning_rate * full_gradient(model, pooled).grad;
  std::vector<ScatterPoint> points;
  points.reserve(clients.size() + 1);
  for (ClientId k = 0; k < clients.size(); ++k) {
    const Vector local = learning_rate * full_gradient(model, clients[k]).grad;
    points.push_back({label_distribution(clients[k]).entropy, (local - truth).squaredNorm(), round, k});
  }
  points.push_back({label_distribution(pooled).entropy, 0.0, round, std::nullopt});
  return points;
}

double envelope_coverage(std::span<const ScatterPoint> points, const EnvelopeParams& params, Index num_classes) {
  if (points.empty()) throw DomainError("envelope coverage of an empty point set");
  std::size_t covered = 0;
  for (const auto& p : points)
    if (p.gap <= params.curve(p.entropy, num_classes)) ++covered;
  return static_cast<double>(covered) / static_cast<double>(points.size());
}

EnvelopeFit fit_envelope(std::span<const ScatterPoint> points, Index num_classes, double min_coverage) {
  if (points.empty()) throw DomainError("cannot fit an envelope to no points");
  double top = 0;
  for (const auto& p : points) top = std::max(top, p.gap);
  if (!(top > 0)) top = 1e-12;

  // kappa and rho are searched on a log grid relative to the largest gap.
  std::vector<double> scales;
  for (int i = -40; i <= 8; ++i) scales.push_back(top * std::pow(10.0, i / 8.0));
  const std::vector<double> betas = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0};

  EnvelopeFit best;
  best.mean_height = std::numeric_limits<double>::infinity();
  for (double beta : betas) {
    for (double kappa : scales) {
      for (double fraction : {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99}) {
        const EnvelopeParams params{beta, kappa * fraction, kappa};
        const double coverage = envelope_coverage(points, params, num_classes);
        if (coverage < min_coverage) continue;
        double height = 0;
        for (const auto& p : points) height += params.curve(p.entropy, num_classes);
        height /= static_cast<double>(points.size());
        if (height < best.mean_height) best = {params, coverage, height, true};
      }
    }
  }
  return best;
}

}  // namespace fedsim
