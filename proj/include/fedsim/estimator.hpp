#pragma once

#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/types.hpp"

#include <optional>
#include <vector>

namespace fedsim {

// Last output-bias update received from a client.
struct BiasUpdateRecord {
  ClientId client_id = 0;
  Vector delta_b;
  // 0 means the client has never reported.
  int last_updated_round = 0;

  bool has_update() const noexcept { return last_updated_round > 0; }
};

struct EstimatorConfig {
  double temperature = 0.0025;

  void validate() const;
};

// Entropy of softmax(delta_b / T). Server-side heterogeneity estimate.
double estimate_entropy(const Eigen::Ref<const Vector>& delta_b, const EstimatorConfig& cfg);

// Mean softmax mass each class receives from samples of other classes.
struct ConfusionAverages {
  Vector e;
  double delta = 0;  // max_i |mean(e) - e_i|
};

ConfusionAverages confusion_averages(const MlpModel& model, const ClientDataset& ds);

// eta R (D_i sum_c E_c - E_i), the expected output-bias update.
Vector expected_bias_update(const LabelDistribution& dist, const ConfusionAverages& conf, double learning_rate,
                            int local_epochs);

// Lower bound on E[H^(D_u) - H^(D_k)] for a pair of clients.
double theorem1_rhs(const LabelDistribution& balanced, const LabelDistribution& imbalanced,
                    const ConfusionAverages& conf, double learning_rate, int local_epochs, double temperature);

struct EnvelopeParams {
  double beta = 1.0;
  double rho = 0.13;
  double kappa = 0.14;

  void validate() const;
  // -exp(beta (x - ln C)) rho + kappa
  double curve(double entropy, Index num_classes) const;
};

struct ScatterPoint {
  double entropy = 0;  // true H(D^(k))
  double gap = 0;      // || eta grad F_k - eta grad F ||^2
  int round = 0;
  // Client id, or nullopt for the pooled super-client.
  std::optional<ClientId> client;
};

// One point per client (plus the pooled super-client) at the given model.
std::vector<ScatterPoint> assumption_scatter(const std::vector<ClientDataset>& clients, const ClientDataset& pooled,
                                             const MlpModel& model, double learning_rate, int round = 0);

double envelope_coverage(std::span<const ScatterPoint> points, const EnvelopeParams& params, Index num_classes);

struct EnvelopeFit {
  EnvelopeParams params;
  double coverage = 0;
  // Mean height of the envelope over the points; smaller is tighter.
  double mean_height = 0;
  bool feasible = false;
};

// Grid search over (beta, rho, kappa) with kappa > rho > 0, minimizing the mean
// envelope height subject to coverage >= min_coverage.
EnvelopeFit fit_envelope(std::span<const ScatterPoint> points, Index num_classes, double min_coverage = 0.9);

}  // namespace fedsim
