#pragma once

#include "fedsim/types.hpp"

#include <span>
#include <vector>

namespace fedsim::stats {

double mean(std::span<const double> xs);
// Population standard deviation (divides by n).
double stddev(std::span<const double> xs);
// Standard error of the mean with the n - 1 variance.
double standard_error(std::span<const double> xs);

// 1-based ranks with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace fedsim::stats
