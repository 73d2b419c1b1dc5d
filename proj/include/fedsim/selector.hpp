#pragma once

#include "fedsim/cluster.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

enum class SelectorKind { Hics, Random, PowD, ClusteredSampling, DivFl };

std::string_view to_string(SelectorKind kind);
SelectorKind selector_from_string(std::string_view name);

// Work a selector did in one round, in scalar vector entries.
struct SelectionCost {
  // Dimension of the per-client vectors the selector operates on.
  Index vector_dim = 0;
  // Total floating-point vector entries read.
  std::uint64_t entries_touched = 0;

  SelectionCost& operator+=(const SelectionCost& o) {
    vector_dim = std::max(vector_dim, o.vector_dim);
    entries_touched += o.entries_touched;
    return *this;
  }
};

struct Selection {
  ClientIds clients;
  SelectionCost cost;
};

// gamma0 (1 - t / total_rounds).
double gamma_schedule(int round, int total_rounds, double gamma0);

// Client weights p_k = |B_k| / sum_i |B_i|.
Vector client_weights(std::span<const std::size_t> sizes);

struct SelectionPolicyState {
  double gamma0 = 4.0;
  double gamma = 4.0;
  Vector cluster_probs;               // pi^t over groups
  std::vector<Vector> within_probs;   // p~_m, aligned with the group's members
  Vector client_weights;              // p_k

  // Probability that the first draw returns each client: sum_m pi_m p~_{m,k}.
  Vector first_draw_distribution(const ClusterAssignment& assignment) const;
};

// pi^t_m ∝ exp(gamma H̄_m); p~_m ∝ p_k within group m.
SelectionPolicyState hics_policy(const ClusterAssignment& assignment, double gamma, const Vector& client_weights);

// Two-stage draws (group, then client) until K distinct clients are held.
// Duplicate draws are discarded; after 10 K M draws the remaining slots are
// filled with the unchosen clients of largest first-draw probability.
ClientIds select_hics(const SelectionPolicyState& state, const ClusterAssignment& assignment, std::size_t k,
                      Rng& rng);

// Replacement-free uniform sampling of the warm-up rounds.
class WarmupPool {
 public:
  explicit WarmupPool(std::size_t num_clients);

  // min(K, |pool|) clients drawn uniformly without replacement.
  ClientIds draw(std::size_t k, Rng& rng);
  std::size_t remaining() const noexcept { return pool_.size(); }

 private:
  ClientIds pool_;
};

inline int warmup_rounds(std::size_t num_clients, std::size_t k) {
  return static_cast<int>((num_clients + k - 1) / k);
}

// Multinomial by p_k without replacement (sequential draws, renormalized).
ClientIds select_random(std::size_t k, const Vector& client_weights, Rng& rng);

// K largest losses, ties to the lower id.
ClientIds select_powd(std::span<const double> losses, std::size_t k);

// Ward clustering on arccos distances of the update rows into K groups, then
// one client per group ∝ p_k.
Dendrogram cluster_updates_cosine(const Matrix& updates, std::size_t k);
ClientIds select_cs(const Matrix& updates, std::size_t k, const Vector& client_weights, Rng& rng);

// Greedy facility location: each step adds the client that most reduces
// sum_k min_{j in S} ||u_k - u_j||. Ties to the lower id.
ClientIds select_divfl(const Matrix& updates, std::size_t k);

}  // namespace fedsim
