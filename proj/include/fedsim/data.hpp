#pragma once

#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedsim {

// Features, integer labels and per-class counts for one client (or a pooled set).
struct ClientDataset {
  FeatureMatrix features;          // n x d
  std::vector<int> labels;         // n entries in [0, C)
  std::vector<std::size_t> class_counts;  // C entries, sums to n

  Index size() const noexcept { return static_cast<Index>(labels.size()); }
  Index dim() const noexcept { return features.cols(); }
  Index num_classes() const noexcept { return static_cast<Index>(class_counts.size()); }
  bool empty() const noexcept { return labels.empty(); }

  // Builds a dataset and its class counts; validates label range.
  static ClientDataset from(FeatureMatrix features, std::vector<int> labels, Index num_classes);
  // Rows selected by index, in the given order.
  ClientDataset subset(std::span<const std::size_t> rows) const;
};

struct LabelDistribution {
  Vector probs;
  double entropy = 0;

  static LabelDistribution from_probs(Vector probs);
  static LabelDistribution uniform(Index num_classes);
  static LabelDistribution one_hot(Index num_classes, Index cls);
};

LabelDistribution label_distribution(const ClientDataset& ds);

struct BlobSpec {
  Index num_classes = 10;
  Index per_class = 600;
  Index dim = 32;
  // Standard deviation of each class cluster around its mean.
  double spread = 1.0;
  // Standard deviation of the class means around the origin.
  double separation = 1.0;
  std::uint64_t seed = 0;
};

struct TrainTestSplit {
  ClientDataset train;
  ClientDataset test;
};

// C Gaussian clusters, exactly per_class samples per class in the training
// set and a balanced held-out test set with max(1, per_class / 4) per class.
TrainTestSplit generate_blobs(const BlobSpec& spec);

// IDX (MNIST) images + labels. Pixels scaled to [0, 1].
ClientDataset load_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, Index num_classes);

struct PartitionSpec {
  std::size_t num_clients = 0;
  std::vector<double> alphas;
  std::uint64_t seed = 0;

  void validate() const;
  // Cohort index of a client; cohorts are contiguous equal-size id ranges.
  std::size_t cohort_of(ClientId k) const;
  std::size_t cohort_begin(std::size_t cohort) const;
  std::size_t cohort_end(std::size_t cohort) const;
};

struct Partition {
  std::vector<ClientDataset> clients;
  // Row indices into the pooled dataset owned by each client.
  std::vector<std::vector<std::size_t>> rows;
  std::vector<std::size_t> cohort;
};

Partition dirichlet_partition(const ClientDataset& pooled, const PartitionSpec& spec);

}  // namespace fedsim
