#pragma once

#include "fedsim/types.hpp"

#include <span>
#include <vector>

namespace fedsim {

struct ClusterConfig {
  double lambda = 0.1;
  std::size_t num_clusters = 5;

  void validate(std::size_t num_clients) const;
};

struct ClusterAssignment {
  // Disjoint groups covering every client; members ascending, groups ordered
  // by their smallest member.
  std::vector<ClientIds> groups;
  // Mean estimated entropy per group; empty until annotate_means.
  Vector mean_entropy;

  // Group index of every client.
  std::vector<std::size_t> labels(std::size_t num_clients) const;
};

struct MergeStep {
  std::size_t step = 0;
  // Smallest client id of each merged cluster.
  ClientId merged_a = 0;
  ClientId merged_b = 0;
  double height = 0;
};

struct Dendrogram {
  ClusterAssignment assignment;
  std::vector<MergeStep> merges;
};

// lambda * arccos(cos(u, k)) + (1 - lambda) |H_u - H_k|. A zero-norm vector is
// treated as orthogonal to any non-zero one.
double pair_distance(const Eigen::Ref<const Vector>& update_u, const Eigen::Ref<const Vector>& update_k,
                     double entropy_u, double entropy_k, double lambda);

// Pairwise pair_distance over per-client vectors (rows of updates).
Matrix distance_matrix(const Matrix& updates, const Vector& entropies, double lambda);

// Agglomerative clustering with Lance-Williams Ward updates applied directly
// to the given dissimilarities; stops at num_clusters groups.
Dendrogram ward_cluster(const Matrix& distances, std::size_t num_clusters);

ClusterAssignment annotate_means(ClusterAssignment assignment, const Vector& entropies);

}  // namespace fedsim
