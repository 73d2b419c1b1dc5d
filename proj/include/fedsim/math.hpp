#pragma once

#include "fedsim/types.hpp"

#include <algorithm>
#include <cmath>

namespace fedsim {

// Numerically stable softmax of v / temperature (max-subtraction).
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v,
                                          typename Derived::Scalar temperature = 1) {
  using S = typename Derived::Scalar;
  const S peak = v.maxCoeff();
  VectorX<S> e = ((v.array() - peak) / temperature).exp().matrix();
  return e / e.sum();
}

// Column-wise softmax for a C x B block of logits.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  MatrixX<S> out = logits;
  for (Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return out;
}

// Shannon entropy in nats with 0 ln 0 := 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& probs) {
  using S = typename Derived::Scalar;
  S h = 0;
  for (Index i = 0; i < probs.size(); ++i) {
    const S p = probs(i);
    if (p > 0) h -= p * std::log(p);
  }
  return std::max<S>(h, 0);
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const S peak = v.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((v.array() - peak).exp().sum());
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace fedsim
