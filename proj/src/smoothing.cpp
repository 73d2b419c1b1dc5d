#include "fedsim/smoothing.hpp"

namespace fedsim {

Vector savgol_weights(int window, int polyorder, int at) {
  if (window < 1 || window % 2 == 0) throw ConfigError("Savitzky-Golay window must be odd and positive");
  if (polyorder < 0 || polyorder >= window) throw ConfigError("Savitzky-Golay order must lie in [0, window)");
  if (at < 0 || at >= window) throw ConfigError("evaluation position outside the window");
  const int half = window / 2;
  const double scale = half > 0 ? static_cast<double>(half) : 1.0;
  Matrix vander(window, polyorder + 1);
  for (int j = 0; j < window; ++j) {
    const double x = (j - half) / scale;
    double p = 1;
    for (int d = 0; d <= polyorder; ++d, p *= x) vander(j, d) = p;
  }
  Vector basis(polyorder + 1);
  const double x = (at - half) / scale;
  double p = 1;
  for (int d = 0; d <= polyorder; ++d, p *= x) basis(d) = p;
  const Matrix gram = vander.transpose() * vander;
  return vander * gram.ldlt().solve(basis);
}

SmoothedSeries savitzky_golay(std::span<const double> series, int window, int polyorder) {
  const auto n = static_cast<Index>(series.size());
  const Eigen::Map<const Vector> y(series.data(), n);
  if (n < window) return {Vector(y), false};
  const int half = window / 2;

  SmoothedSeries out{Vector(n), true};
  const Vector centre = savgol_weights(window, polyorder, half);
  for (Index i = half; i < n - half; ++i) out.values(i) = centre.dot(y.segment(i - half, window));
  for (int i = 0; i < half; ++i) {
    out.values(i) = savgol_weights(window, polyorder, i).dot(y.head(window));
    out.values(n - half + i) = savgol_weights(window, polyorder, half + 1 + i).dot(y.tail(window));
  }
  return out;
}

}  // namespace fedsim
