#include "fedsim/selector.hpp"

#include "fedsim/math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fedsim {

std::string_view to_string(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::Hics: return "hics";
    case SelectorKind::Random: return "random";
    case SelectorKind::PowD: return "pow_d";
    case SelectorKind::ClusteredSampling: return "clustered_sampling";
    case SelectorKind::DivFl: return "div_fl";
  }
  return "unknown";
}

SelectorKind selector_from_string(std::string_view name) {
  if (name == "hics") return SelectorKind::Hics;
  if (name == "random") return SelectorKind::Random;
  if (name == "pow_d" || name == "powd") return SelectorKind::PowD;
  if (name == "clustered_sampling" || name == "cs") return SelectorKind::ClusteredSampling;
  if (name == "div_fl" || name == "divfl") return SelectorKind::DivFl;
  throw ConfigError("unknown selector '" + std::string(name) + "'");
}

double gamma_schedule(int round, int total_rounds, double gamma0) {
  if (total_rounds < 1) throw ConfigError("total rounds must be >= 1");
  if (round < 0 || round > total_rounds) throw ConfigError("round outside [0, total_rounds]");
  return gamma0 * (1.0 - static_cast<double>(round) / static_cast<double>(total_rounds));
}

Vector client_weights(std::span<const std::size_t> sizes) {
  Vector w(static_cast<Index>(sizes.size()));
  for (std::size_t k = 0; k < sizes.size(); ++k) w(static_cast<Index>(k)) = static_cast<double>(sizes[k]);
  const double total = w.sum();
  if (!(total > 0)) throw DomainError("client weights need at least one sample");
  return w / total;
}

Vector SelectionPolicyState::first_draw_distribution(const ClusterAssignment& assignment) const {
  Vector omega = Vector::Zero(client_weights.size());
  for (std::size_t g = 0; g < assignment.groups.size(); ++g) {
    const auto& members = assignment.groups[g];
    for (std::size_t j = 0; j < members.size(); ++j)
      omega(static_cast<Index>(members[j])) += cluster_probs(static_cast<Index>(g)) * within_probs[g](static_cast<Index>(j));
  }
  return omega;
}

SelectionPolicyState hics_policy(const ClusterAssignment& assignment, double gamma, const Vector& client_weights) {
  if (assignment.mean_entropy.size() != static_cast<Index>(assignment.groups.size()))
    throw ConfigError("cluster assignment lacks mean entropies");
  SelectionPolicyState state;
  state.gamma = gamma;
  state.client_weights = client_weights;
  state.cluster_probs = softmax(Vector(gamma * assignment.mean_entropy));
  state.within_probs.reserve(assignment.groups.size());
  for (const auto& members : assignment.groups) {
    Vector p(static_cast<Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) p(static_cast<Index>(j)) = client_weights(static_cast<Index>(members[j]));
    const double total = p.sum();
    if (total > 0)
      p /= total;
    else
      p.setConstant(1.0 / static_cast<double>(members.size()));
    state.within_probs.push_back(std::move(p));
  }
  return state;
}

ClientIds select_hics(const SelectionPolicyState& state, const ClusterAssignment& assignment, std::size_t k,
                      Rng& rng) {
  const auto n = static_cast<std::size_t>(state.client_weights.size());
  if (k > n) throw ConfigError("cannot select more clients than exist");
  ClientIds chosen;
  std::vector<bool> taken(n, false);
  const std::size_t cap = 10 * k * std::max<std::size_t>(1, assignment.groups.size());
  const std::span<const double> group_probs(state.cluster_probs.data(), static_cast<std::size_t>(state.cluster_probs.size()));
  for (std::size_t draws = 0; chosen.size() < k && draws < cap; ++draws) {
    const auto g = static_cast<std::size_t>(categorical_draw(group_probs, rng));
    const Vector& within = state.within_probs[g];
    const auto j = categorical_draw(std::span<const double>(within.data(), static_cast<std::size_t>(within.size())), rng);
    const ClientId client = assignment.groups[g][static_cast<std::size_t>(j)];
    if (taken[client]) continue;
    taken[client] = true;
    chosen.push_back(client);
  }
  if (chosen.size() < k) {
    const Vector omega = state.first_draw_distribution(assignment);
    ClientIds rest;
    for (ClientId c = 0; c < n; ++c)
      if (!taken[c]) rest.push_back(c);
    std::stable_sort(rest.begin(), rest.end(),
                     [&](ClientId a, ClientId b) { return omega(static_cast<Index>(a)) > omega(static_cast<Index>(b)); });
    rest.resize(k - chosen.size());
    chosen.insert(chosen.end(), rest.begin(), rest.end());
  }
  return chosen;
}

WarmupPool::WarmupPool(std::size_t num_clients) : pool_(num_clients) {
  std::iota(pool_.begin(), pool_.end(), 0);
}

ClientIds WarmupPool::draw(std::size_t k, Rng& rng) {
  const std::size_t take = std::min(k, pool_.size());
  ClientIds out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool_.size()));
    out.push_back(pool_[j]);
    pool_.erase(pool_.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

ClientIds select_random(std::size_t k, const Vector& client_weights, Rng& rng) {
  const auto n = static_cast<std::size_t>(client_weights.size());
  if (k > n) throw ConfigError("cannot select more clients than exist");
  std::vector<double> w(client_weights.data(), client_weights.data() + n);
  ClientIds out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    double mass = 0;
    for (double x : w) mass += x;
    if (!(mass > 0)) {
      // Only zero-weight clients remain.
      for (ClientId c = 0; c < n && out.size() < k; ++c)
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
      break;
    }
    const auto c = static_cast<ClientId>(categorical_draw(w, rng));
    out.push_back(c);
    w[c] = 0;
  }
  return out;
}

ClientIds select_powd(std::span<const double> losses, std::size_t k) {
  if (k > losses.size()) throw ConfigError("cannot select more clients than were probed");
  ClientIds order(losses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ClientId a, ClientId b) { return losses[a] > losses[b]; });
  order.resize(k);
  return order;
}

Dendrogram cluster_updates_cosine(const Matrix& updates, std::size_t k) {
  return ward_cluster(distance_matrix(updates, Vector::Zero(updates.rows()), 1.0), k);
}

ClientIds select_cs(const Matrix& updates, std::size_t k, const Vector& client_weights, Rng& rng) {
  if (updates.rows() != client_weights.size()) throw ConfigError("one update per client required");
  const Dendrogram tree = cluster_updates_cosine(updates, k);
  ClientIds out;
  for (const auto& members : tree.assignment.groups) {
    std::vector<double> w(members.size());
    double mass = 0;
    for (std::size_t j = 0; j < members.size(); ++j) mass += (w[j] = client_weights(static_cast<Index>(members[j])));
    if (!(mass > 0)) std::fill(w.begin(), w.end(), 1.0);
    out.push_back(members[static_cast<std::size_t>(categorical_draw(w, rng))]);
  }
  return out;
}

ClientIds select_divfl(const Matrix& updates, std::size_t k) {
  const auto n = static_cast<std::size_t>(updates.rows());
  if (k > n) throw ConfigError("cannot select more clients than exist");
  Matrix dist = Matrix::Zero(updates.rows(), updates.rows());
  for (Index i = 0; i < updates.rows(); ++i)
    for (Index j = i + 1; j < updates.rows(); ++j) dist(i, j) = dist(j, i) = (updates.row(i) - updates.row(j)).norm();

  // Before anything is selected every client is "served" at the largest distance.
  Vector served = Vector::Constant(updates.rows(), dist.size() > 0 ? dist.maxCoeff() : 0.0);
  std::vector<bool> taken(n, false);
  ClientIds out;
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      const double cost = served.cwiseMin(dist.col(static_cast<Index>(j))).sum();
      if (cost < best_cost) {
        best_cost = cost;
        best = j;
      }
    }
    taken[best] = true;
    out.push_back(best);
    served = served.cwiseMin(dist.col(static_cast<Index>(best)));
  }
  return out;
}

}  // namespace fedsim
