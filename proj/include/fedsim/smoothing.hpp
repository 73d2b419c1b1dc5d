#pragma once

#include "fedsim/types.hpp"

#include <span>

namespace fedsim {

struct SmoothedSeries {
  Vector values;
  // False when the series was shorter than the window and returned as-is.
  bool smoothed = true;
};

// Weights w such that sum_j w_j y_j is the least-squares polynomial of the
// given order, fitted over the window, evaluated at window position `at`.
Vector savgol_weights(int window, int polyorder, int at);

// Savitzky-Golay smoothing. Interior points use the centred window; the first
// and last window/2 points use the polynomial fitted to the edge window.
SmoothedSeries savitzky_golay(std::span<const double> series, int window = 13, int polyorder = 3);

}  // namespace fedsim
