#pragma once

#include "fedsim/cluster.hpp"
#include "fedsim/data.hpp"
#include "fedsim/estimator.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/selector.hpp"
#include "fedsim/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedsim {

struct DatasetConfig {
  enum class Kind { Blobs, Idx };
  Kind kind = Kind::Blobs;
  // Blob parameters; the seed comes from the run seed.
  BlobSpec blobs;
  std::filesystem::path train_images, train_labels, test_images, test_labels;

  Index num_classes() const noexcept { return blobs.num_classes; }
};

struct ExperimentConfig {
  std::size_t num_clients = 50;
  std::size_t clients_per_round = 5;
  std::size_t num_clusters = 5;
  int rounds = 200;

  SelectorKind selector = SelectorKind::Hics;
  double gamma0 = 4.0;
  // Number of clients probed by pow-d; 0 means all of them.
  std::size_t pow_d = 0;

  TrainConfig train;
  // Halve the learning rate every 10 rounds.
  bool lr_step_decay = false;
  EstimatorConfig estimator;
  double lambda = 0.1;

  DatasetConfig dataset;
  std::vector<double> alphas = {0.001, 0.002, 0.005, 0.01, 0.5};
  std::vector<Index> hidden = {64};

  int eval_every = 5;
  // Exponent of the H_M diagnostic.
  double diag_beta = 1.0;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path output_dir = "out";

  // Throws ConfigError listing every violated constraint.
  void validate() const;
  ClusterConfig cluster_config() const { return {lambda, num_clusters}; }
  std::vector<Index> widths(Index input_dim) const;
};

struct RoundMetrics {
  int round = 0;
  SelectorKind selector = SelectorKind::Random;
  ClientIds selected;
  double avg_train_loss = 0;
  double std_train_loss = 0;
  std::optional<double> test_accuracy;
  std::optional<double> test_loss;
  double h_m_diag = 0;
  double gamma_t = 0;
  double wall_time = 0;
  SelectionCost cost;
  bool warmup = false;
};

struct Evaluation {
  double accuracy = 0;
  double loss = 0;
};

// Argmax accuracy (ties to the lowest class) and mean cross-entropy.
Evaluation evaluate(const MlpModel& model, const ClientDataset& test);

// sum_k p_k exp(beta H_k) / exp(beta ln C), with rho = 1.
double system_heterogeneity(std::span<const LabelDistribution> dists, const Vector& weights, double beta);

// Unweighted mean of the local models theta + delta_k, summed in the order given.
Vector aggregate(const Vector& global, std::span<const Vector> deltas);

// Worker count from FEDSIM_THREADS (default 1).
unsigned worker_threads();

// State of one simulated federation for one seed.
class Federation {
 public:
  Federation(ExperimentConfig cfg, std::uint64_t seed);
  // Uses caller-provided data instead of generating it.
  Federation(ExperimentConfig cfg, std::uint64_t seed, ClientDataset pooled, ClientDataset test);

  // Runs global round t (1-based) and returns its metrics.
  RoundMetrics run_round(int t);
  std::vector<RoundMetrics> run();

  const ExperimentConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const MlpModel& model() const noexcept { return model_; }
  MlpModel& model() noexcept { return model_; }
  const ClientDataset& pooled() const noexcept { return pooled_; }
  const ClientDataset& test_set() const noexcept { return test_; }
  const Partition& partition() const noexcept { return partition_; }
  const std::vector<LabelDistribution>& distributions() const noexcept { return dists_; }
  const std::vector<BiasUpdateRecord>& records() const noexcept { return records_; }
  const Vector& weights() const noexcept { return weights_; }
  int warmup_length() const noexcept { return warmup_rounds(cfg_.num_clients, cfg_.clients_per_round); }
  // Estimated entropy of every client from its stored bias update.
  Vector estimated_entropies() const;
  const SelectionCost& total_cost() const noexcept { return total_cost_; }
  // Last clustering computed by the HiCS selector, if any.
  const std::optional<Dendrogram>& last_clustering() const noexcept { return last_clustering_; }

  double learning_rate(int t) const;
  std::uint64_t local_seed(int t, ClientId k) const;

  // Selection step alone; exposed for tests.
  Selection select(int t, Rng& rng);

 private:
  void setup();

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  ClientDataset pooled_;
  ClientDataset test_;
  Partition partition_;
  std::vector<LabelDistribution> dists_;
  Vector weights_;
  MlpModel model_;
  std::vector<BiasUpdateRecord> records_;
  // Latest full update per client, for clustered sampling.
  Matrix update_cache_;
  WarmupPool warmup_;
  SelectionCost total_cost_;
  std::optional<Dendrogram> last_clustering_;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  SelectionCost total_cost;
  Index num_parameters = 0;
  Index num_classes = 0;
  bool cs_full_updates = true;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

// Metrics CSV with the fixed column set.
void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds);
std::string metrics_csv(std::span<const RoundMetrics> rounds);

// First round whose (optionally smoothed) accuracy reaches target.
std::optional<int> rounds_to_target(std::span<const int> rounds, std::span<const double> accuracy, double target,
                                    bool smooth = true);

}  // namespace fedsim
