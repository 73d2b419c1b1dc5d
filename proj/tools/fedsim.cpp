// fedsim: command-line front end for the federated client-selection simulator.

#include "fedsim/config.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/estimator.hpp"
#include "fedsim/report.hpp"
#include "fedsim/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct CommonOptions {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string selector;
  std::string out;
};

ExperimentConfig resolve(const CommonOptions& opt) {
  ExperimentConfig cfg = load_config(opt.config);
  if (!opt.seeds.empty()) cfg.seeds = opt.seeds;
  if (!opt.selector.empty()) cfg.selector = selector_from_string(opt.selector);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string tag(const ExperimentConfig& cfg, std::uint64_t seed) {
  return std::string(to_string(cfg.selector)) + "_seed" + std::to_string(seed);
}

int cmd_run(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  for (std::uint64_t seed : cfg.seeds) {
    const ExperimentResult result = run_experiment(cfg, seed);
    const fs::path csv = cfg.output_dir / ("metrics_" + tag(cfg, seed) + ".csv");
    auto out = open_out(csv);
    write_metrics_csv(out, result.rounds);
    open_out(cfg.output_dir / ("manifest_" + tag(cfg, seed) + ".json")) << run_manifest(cfg, seed, result).dump(2) << '\n';
    const auto& last = result.rounds.back();
    std::cout << "seed " << seed << ": " << result.rounds.size() << " rounds, final accuracy "
              << (last.test_accuracy ? std::to_string(*last.test_accuracy) : "n/a") << " -> " << csv.string() << '\n';
  }
  return 0;
}

int cmd_partition(const CommonOptions& opt, bool dendrogram) {
  const ExperimentConfig cfg = resolve(opt);
  for (std::uint64_t seed : cfg.seeds) {
    Federation fed(cfg, seed);
    const auto& part = fed.partition();
    nlohmann::json doc = nlohmann::json::array();
    auto csv = open_out(cfg.output_dir / ("entropy_seed" + std::to_string(seed) + ".csv"));
    csv << "client_id,alpha_cohort,alpha,num_samples,entropy\n";
    for (ClientId k = 0; k < part.clients.size(); ++k) {
      const auto cohort = part.cohort[k];
      doc.push_back({{"client_id", k}, {"class_counts", part.clients[k].class_counts}, {"alpha_cohort", cohort},
                     {"alpha", cfg.alphas[cohort]}});
      csv << k << ',' << cohort << ',' << cfg.alphas[cohort] << ',' << part.clients[k].size() << ','
          << fed.distributions()[k].entropy << '\n';
    }
    open_out(cfg.output_dir / ("partition_seed" + std::to_string(seed) + ".json")) << doc.dump(2) << '\n';

    if (dendrogram) {
      // One local update per client from the initial model, clustered as HiCS-FL would.
      Matrix updates(static_cast<Index>(part.clients.size()), fed.model().num_classes());
      Vector entropies(updates.rows());
      for (ClientId k = 0; k < part.clients.size(); ++k) {
        const LocalUpdate u = local_update(fed.model(), part.clients[k], cfg.train, fed.local_seed(1, k));
        updates.row(static_cast<Index>(k)) = u.delta_b.transpose();
        entropies(static_cast<Index>(k)) = estimate_entropy(u.delta_b, cfg.estimator);
      }
      const Dendrogram tree = ward_cluster(distance_matrix(updates, entropies, cfg.lambda), 1);
      nlohmann::json merges = nlohmann::json::array();
      for (const auto& m : tree.merges)
        merges.push_back({{"step", m.step}, {"merged_a", m.merged_a}, {"merged_b", m.merged_b}, {"height", m.height}});
      open_out(cfg.output_dir / ("dendrogram_seed" + std::to_string(seed) + ".json")) << merges.dump(2) << '\n';
    }
    std::cout << "seed " << seed << ": partitioned " << part.clients.size() << " clients into "
              << cfg.alphas.size() << " cohorts\n";
  }
  return 0;
}

int cmd_estimate_entropy(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  for (std::uint64_t seed : cfg.seeds) {
    Federation fed(cfg, seed);
    auto csv = open_out(cfg.output_dir / ("entropy_estimates_" + tag(cfg, seed) + ".csv"));
    csv << "client_id,true_entropy,estimated_entropy,round\n";
    std::vector<double> truth, estimate;
    for (int t = 1; t <= cfg.rounds; ++t) {
      const RoundMetrics m = fed.run_round(t);
      ClientIds ids = m.selected;
      std::sort(ids.begin(), ids.end());
      for (ClientId k : ids) {
        const double h = fed.distributions()[k].entropy;
        const double est = estimate_entropy(fed.records()[k].delta_b, cfg.estimator);
        csv << k << ',' << h << ',' << est << ',' << t << '\n';
      }
      if (t == fed.warmup_length()) {
        const Vector est = fed.estimated_entropies();
        for (ClientId k = 0; k < cfg.num_clients; ++k) {
          truth.push_back(fed.distributions()[k].entropy);
          estimate.push_back(est(static_cast<Index>(k)));
        }
      }
    }
    if (!truth.empty())
      std::cout << "seed " << seed << ": Spearman(estimated, true) after warm-up = " << stats::spearman(estimate, truth)
                << '\n';
  }
  return 0;
}

int cmd_validate_assumption(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  for (std::uint64_t seed : cfg.seeds) {
    Federation fed(cfg, seed);
    std::vector<ScatterPoint> points;
    auto probe = [&](int t) {
      auto p = assumption_scatter(fed.partition().clients, fed.pooled(), fed.model(), fed.learning_rate(std::max(t, 1)), t);
      points.insert(points.end(), p.begin(), p.end());
    };
    probe(0);
    for (int t = 1; t <= cfg.rounds; ++t) {
      fed.run_round(t);
      if (t % cfg.eval_every == 0) probe(t);
    }
    auto csv = open_out(cfg.output_dir / ("assumption_scatter_seed" + std::to_string(seed) + ".csv"));
    csv << "round,client_id,entropy,gap\n";
    std::vector<double> xs, ys;
    for (const auto& p : points) {
      csv << p.round << ',' << (p.client ? std::to_string(*p.client) : "super") << ',' << p.entropy << ',' << p.gap << '\n';
      xs.push_back(p.entropy);
      ys.push_back(p.gap);
    }
    const Index c = fed.model().num_classes();
    const EnvelopeFit fit = fit_envelope(points, c, 0.9);
    const double rho = stats::spearman(xs, ys);
    nlohmann::json report = {{"beta", fit.params.beta},   {"rho", fit.params.rho},
                             {"kappa", fit.params.kappa}, {"coverage", fit.coverage},
                             {"mean_height", fit.mean_height}, {"feasible", fit.feasible},
                             {"num_points", points.size()}, {"spearman_entropy_gap", rho},
                             {"num_classes", c}};
    open_out(cfg.output_dir / ("assumption_envelope_seed" + std::to_string(seed) + ".json")) << report.dump(2) << '\n';
    std::cout << "seed " << seed << ": " << points.size() << " points, envelope coverage " << fit.coverage
              << ", Spearman " << rho << '\n';
  }
  return 0;
}

int cmd_summarize(const std::vector<std::string>& files, double target, const std::string& out) {
  std::vector<AccuracyCurve> curves;
  for (const auto& f : files) curves.push_back(read_accuracy_curve(fs::path(f)));
  const auto rows = summarize(curves, target);
  std::cout << format_summary(rows, target);
  if (!out.empty()) {
    fs::create_directories(out);
    open_out(fs::path(out) / "summary.json") << summary_json(rows, target).dump(2) << '\n';
  }
  return 0;
}

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("--config", opt.config, "Run configuration JSON (or a run manifest)")->required();
  sub->add_option("--seed", opt.seeds, "Seed; repeat for several runs");
  sub->add_option("--selector", opt.selector, "Override the selector (hics, random, pow_d, clustered_sampling, div_fl)");
  sub->add_option("--out", opt.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning client-selection simulator"};
  app.require_subcommand(1);

  CommonOptions run_opt, part_opt, est_opt, val_opt;
  bool dendrogram = false;
  std::vector<std::string> metric_files;
  double target = 0;
  std::string summary_out;

  auto* run = app.add_subcommand("run", "Run experiments and write metrics CSV + manifest");
  add_common(run, run_opt);
  auto* partition = app.add_subcommand("partition", "Write the Dirichlet partition and per-client entropies");
  add_common(partition, part_opt);
  partition->add_flag("--dendrogram", dendrogram, "Also dump the clustering merge list");
  auto* estimate = app.add_subcommand("estimate-entropy", "Write true vs estimated client entropies per round");
  add_common(estimate, est_opt);
  auto* validate = app.add_subcommand("validate-assumption", "Gradient-gap scatter and envelope fit");
  add_common(validate, val_opt);
  auto* summarize_cmd = app.add_subcommand("summarize", "Rounds-to-target and speedup table");
  summarize_cmd->add_option("csv", metric_files, "Metrics CSV files")->required();
  summarize_cmd->add_option("--target-acc", target, "Target test accuracy")->required();
  summarize_cmd->add_option("--out", summary_out, "Directory for summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*partition) return cmd_partition(part_opt, dendrogram);
    if (*estimate) return cmd_estimate_entropy(est_opt);
    if (*validate) return cmd_validate_assumption(val_opt);
    if (*summarize_cmd) return cmd_summarize(metric_files, target, summary_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
