#include "fedsim/report.hpp"

#include "fedsim/engine.hpp"
#include "fedsim/smoothing.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fedsim {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

AccuracyCurve read_accuracy_curve(std::istream& csv) {
  std::string line;
  if (!std::getline(csv, line)) throw ConfigError("metrics CSV is empty");
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"round", "selector", "test_accuracy"})
    if (!col.contains(need)) throw ConfigError(std::string("metrics CSV lacks column '") + need + "'");

  AccuracyCurve curve;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw ConfigError("metrics CSV row has " + std::to_string(cells.size()) + " cells");
    if (curve.selector.empty()) curve.selector = cells[col["selector"]];
    const auto& acc = cells[col["test_accuracy"]];
    if (acc.empty()) continue;
    curve.rounds.push_back(std::stoi(cells[col["round"]]));
    curve.accuracy.push_back(std::stod(acc));
  }
  return curve;
}

AccuracyCurve read_accuracy_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics CSV " + path.string());
  return read_accuracy_curve(in);
}

std::vector<SummaryRow> summarize(const std::vector<AccuracyCurve>& curves, double target) {
  std::map<std::string, std::vector<const AccuracyCurve*>> groups;
  std::vector<std::string> order;
  for (const auto& c : curves) {
    if (!groups.contains(c.selector)) order.push_back(c.selector);
    groups[c.selector].push_back(&c);
  }
  if (!groups.contains("random")) throw ConfigError("summary needs a run of the random selector as baseline");

  std::map<std::string, SummaryRow> rows;
  for (const auto& [name, members] : groups) {
    const auto& first = *members.front();
    std::vector<double> mean(first.accuracy.size(), 0.0);
    for (const auto* c : members) {
      if (c->rounds != first.rounds) throw ConfigError("curves of selector '" + name + "' are evaluated at different rounds");
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += c->accuracy[i] / static_cast<double>(members.size());
    }
    SummaryRow row;
    row.selector = name;
    row.runs = members.size();
    row.rounds_to_target = rounds_to_target(first.rounds, mean, target, true);
    if (!mean.empty()) row.final_accuracy = savitzky_golay(mean).values(static_cast<Index>(mean.size()) - 1);
    rows[name] = row;
  }
  const auto baseline = rows["random"].rounds_to_target;
  std::vector<SummaryRow> out;
  for (const auto& name : order) {
    SummaryRow row = rows[name];
    if (baseline && row.rounds_to_target && *row.rounds_to_target > 0)
      row.speedup = static_cast<double>(*baseline) / static_cast<double>(*row.rounds_to_target);
    out.push_back(row);
  }
  return out;
}

std::string format_summary(const std::vector<SummaryRow>& rows, double target) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "target accuracy %.4f\n%-20s %6s %10s %9s\n", target, "selector", "runs", "rounds", "speedup");
  os << buf;
  for (const auto& r : rows) {
    const std::string rounds = r.rounds_to_target ? std::to_string(*r.rounds_to_target) : "n/a";
    std::string speed = "n/a";
    if (r.speedup) {
      std::snprintf(buf, sizeof buf, "%.1fx", *r.speedup);
      speed = buf;
    }
    std::snprintf(buf, sizeof buf, "%-20s %6zu %10s %9s\n", r.selector.c_str(), r.runs, rounds.c_str(), speed.c_str());
    os << buf;
  }
  return os.str();
}

nlohmann::json summary_json(const std::vector<SummaryRow>& rows, double target) {
  nlohmann::json out = {{"target_accuracy", target}, {"selectors", nlohmann::json::array()}};
  for (const auto& r : rows) {
    nlohmann::json row = {{"selector", r.selector}, {"runs", r.runs}, {"final_smoothed_accuracy", r.final_accuracy}};
    row["rounds_to_target"] = r.rounds_to_target ? nlohmann::json(*r.rounds_to_target) : nlohmann::json(nullptr);
    row["speedup"] = r.speedup ? nlohmann::json(*r.speedup) : nlohmann::json(nullptr);
    out["selectors"].push_back(row);
  }
  return out;
}

}  // namespace fedsim
