#include "fedsim/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace fedsim {

void ClusterConfig::validate(std::size_t num_clients) const {
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("lambda must lie in [0, 1]");
  if (num_clusters < 1) throw ConfigError("number of clusters must be >= 1");
  if (num_clusters > num_clients) throw ConfigError("number of clusters exceeds number of clients");
}

std::vector<std::size_t> ClusterAssignment::labels(std::size_t num_clients) const {
  std::vector<std::size_t> out(num_clients, groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (ClientId k : groups[g]) out[k] = g;
  return out;
}

double pair_distance(const Eigen::Ref<const Vector>& update_u, const Eigen::Ref<const Vector>& update_k,
                     double entropy_u, double entropy_k, double lambda) {
  if (update_u.size() != update_k.size()) throw ConfigError("update vectors differ in dimension");
  const double nu = update_u.norm();
  const double nk = update_k.norm();
  double angle;
  if (nu == 0.0 && nk == 0.0)
    angle = 0.0;
  else if (nu == 0.0 || nk == 0.0)
    angle = std::numbers::pi / 2;
  else
    angle = std::acos(std::clamp(update_u.dot(update_k) / (nu * nk), -1.0, 1.0));
  return lambda * angle + (1.0 - lambda) * std::abs(entropy_u - entropy_k);
}

Matrix distance_matrix(const Matrix& updates, const Vector& entropies, double lambda) {
  const Index n = updates.rows();
  if (entropies.size() != n) throw ConfigError("one entropy per client required");
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = pair_distance(updates.row(i).transpose(), updates.row(j).transpose(), entropies(i),
                                        entropies(j), lambda);
  return d;
}

Dendrogram ward_cluster(const Matrix& distances, std::size_t num_clusters) {
  const auto n = static_cast<std::size_t>(distances.rows());
  if (distances.cols() != distances.rows()) throw ConfigError("distance matrix must be square");
  if (num_clusters < 1 || num_clusters > n) throw ConfigError("number of clusters must lie in [1, N]");

  Matrix d = distances;
  std::vector<ClientIds> members(n);
  for (ClientId k = 0; k < n; ++k) members[k] = {k};
  std::vector<bool> active(n, true);

  Dendrogram out;
  for (std::size_t remaining = n, step = 0; remaining > num_clusters; --remaining, ++step) {
    // Smallest dissimilarity; ties go to the pair with the smallest ids
    // (cluster identity = its smallest member).
    std::size_t a = n, b = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double v = d(static_cast<Index>(i), static_cast<Index>(j));
        if (v < best) {
          best = v;
          a = i;
          b = j;
        }
      }
    }
    // Slots are indexed by smallest member, so row-major scan order is the
    // (min id, min id) lexicographic tie-break.
    const double na = static_cast<double>(members[a].size());
    const double nb = static_cast<double>(members[b].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double nk = static_cast<double>(members[k].size());
      const auto ka = d(static_cast<Index>(k), static_cast<Index>(a));
      const auto kb = d(static_cast<Index>(k), static_cast<Index>(b));
      const double updated = ((na + nk) * ka + (nb + nk) * kb - nk * best) / (na + nb + nk);
      d(static_cast<Index>(k), static_cast<Index>(a)) = d(static_cast<Index>(a), static_cast<Index>(k)) = updated;
    }
    out.merges.push_back({step, members[a].front(), members[b].front(), best});
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    std::sort(members[a].begin(), members[a].end());
    members[b].clear();
    active[b] = false;
  }

  for (std::size_t i = 0; i < n; ++i)
    if (active[i]) out.assignment.groups.push_back(std::move(members[i]));
  return out;
}

ClusterAssignment annotate_means(ClusterAssignment assignment, const Vector& entropies) {
  assignment.mean_entropy.resize(static_cast<Index>(assignment.groups.size()));
  for (std::size_t g = 0; g < assignment.groups.size(); ++g) {
    const auto& group = assignment.groups[g];
    if (group.empty()) throw InvariantError("empty cluster");
    double sum = 0;
    for (ClientId k : group) {
      if (static_cast<Index>(k) >= entropies.size()) throw ConfigError("missing entropy for a clustered client");
      sum += entropies(static_cast<Index>(k));
    }
    assignment.mean_entropy(static_cast<Index>(g)) = sum / static_cast<double>(group.size());
  }
  return assignment;
}

}  // namespace fedsim
