#include "fedsim/rng.hpp"

#include <cmath>
#include <limits>

namespace fedsim {

double uniform01(Rng& rng) {
  // 53 random mantissa bits in [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double log_gamma_draw(double alpha, Rng& rng) {
  if (!(alpha > 0)) throw DomainError("gamma shape must be positive");
  if (alpha >= 1.0) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    return std::log(gamma(rng));
  }
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  const double g = gamma(rng);
  double u = uniform01(rng);
  if (u <= 0.0) u = std::numeric_limits<double>::min();
  return std::log(g) + std::log(u) / alpha;
}

Vector dirichlet_draw(double alpha, Index dim, Rng& rng) {
  if (!(alpha > 0)) throw DomainError("Dirichlet concentration must be positive");
  Vector logs(dim);
  for (Index i = 0; i < dim; ++i) logs(i) = log_gamma_draw(alpha, rng);
  const double peak = logs.maxCoeff();
  Vector share = Vector::Zero(dim);
  if (std::isfinite(peak)) {
    share = (logs.array() - peak).exp().matrix();
    const double total = share.sum();
    if (std::isfinite(total) && total > 0) {
      share /= total;
      if (share.allFinite()) return share;
    }
  }
  share.setZero();
  share(static_cast<Index>(uniform01(rng) * static_cast<double>(dim))) = 1.0;
  return share;
}

Index categorical_draw(std::span<const double> weights, Rng& rng) {
  double total = 0;
  for (double w : weights) total += w;
  if (!(total > 0)) throw DomainError("categorical weights must have positive mass");
  const double target = uniform01(rng) * total;
  double acc = 0;
  Index last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0) continue;
    acc += weights[i];
    last_positive = static_cast<Index>(i);
    if (target < acc) return static_cast<Index>(i);
  }
  return last_positive;
}

}  // namespace fedsim
