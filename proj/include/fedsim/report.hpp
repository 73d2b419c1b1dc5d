#pragma once

#include "fedsim/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedsim {

// Evaluated rounds of one metrics CSV.
struct AccuracyCurve {
  std::string selector;
  std::vector<int> rounds;
  std::vector<double> accuracy;
};

AccuracyCurve read_accuracy_curve(std::istream& csv);
AccuracyCurve read_accuracy_curve(const std::filesystem::path& path);

struct SummaryRow {
  std::string selector;
  std::size_t runs = 0;
  std::optional<int> rounds_to_target;
  // random_rounds / rounds_to_target; nullopt when either never reached target.
  std::optional<double> speedup;
  double final_accuracy = 0;
};

// Curves of the same selector are averaged round by round before smoothing.
// Throws ConfigError when no random-selector curve is present.
std::vector<SummaryRow> summarize(const std::vector<AccuracyCurve>& curves, double target);

std::string format_summary(const std::vector<SummaryRow>& rows, double target);
nlohmann::json summary_json(const std::vector<SummaryRow>& rows, double target);

}  // namespace fedsim
