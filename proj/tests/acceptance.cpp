// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include "fedsim/config.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/estimator.hpp"
#include "fedsim/smoothing.hpp"
#include "fedsim/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

using namespace fedsim;

namespace {

const std::filesystem::path kConfigDir = FEDSIM_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig config(const char* name) { return load_config(kConfigDir / name); }

ClientDataset sample_rows(const ClientDataset& pool, const std::vector<std::vector<std::size_t>>& by_class,
                          const std::vector<std::size_t>& per_class, Rng& rng) {
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    std::uniform_int_distribution<std::size_t> pick(0, by_class[c].size() - 1);
    for (std::size_t i = 0; i < per_class[c]; ++i) rows.push_back(by_class[c][pick(rng)]);
  }
  return pool.subset(rows);
}

// 1. Backward pass against central differences and the closed-form bias gradient.
Outcome gradient_correctness() {
  Rng rng(101);
  std::uniform_int_distribution<Index> width(2, 8), classes(2, 5);
  double worst_bias = 0;
  int bad = 0, coords = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const std::vector<Index> widths = {width(rng), width(rng), classes(rng)};
    const MlpModel m = MlpModel::random(widths, rng);
    const Vector x = Vector::Random(widths[0]);
    const Index y = pair % widths[2];
    const Vector g = backward(m, x, y);
    for (Index i = 0; i < m.num_parameters(); ++i, ++coords) {
      MlpModel plus = m, minus = m;
      const double h = 1e-6;
      plus.parameters()(i) += h;
      minus.parameters()(i) -= h;
      const double fd = (ce_loss(forward(plus, x).probs, y) - ce_loss(forward(minus, x).probs, y)) / (2 * h);
      if (std::abs(fd - g(i)) > 1e-6 + 1e-4 * std::abs(fd)) ++bad;
    }
    const Vector closed = bias_grad_closed_form(forward(m, x).probs, y);
    worst_bias = std::max(worst_bias, (g.tail(widths[2]) - closed).cwiseAbs().maxCoeff());
  }
  return {bad == 0 && worst_bias <= 1e-10,
          fmt("%d/%d coordinates outside tolerance, max bias-slice error %.2e", bad, coords, worst_bias)};
}

// 2. Realized bias update vs accumulation oracle and vs its expectation.
Outcome bias_update_oracle() {
  const Index d = 6, c = 5, n = 512;
  const double eta = 0.1;
  Rng rng(202);
  MlpModel model = MlpModel::random({d, c}, rng);
  model.parameters() *= 3.0;
  TrainConfig train;
  train.learning_rate = eta;
  train.local_epochs = 1;
  train.batch_size = static_cast<int>(n);

  Vector label_probs(c);
  label_probs << 0.4, 0.25, 0.15, 0.15, 0.05;
  std::discrete_distribution<int> label(label_probs.data(), label_probs.data() + c);
  std::normal_distribution<double> normal;
  // Features are drawn independently of labels, so E_i is the mean softmax mass.
  auto draw = [&](Index rows) {
    FeatureMatrix x(rows, d);
    std::vector<int> y(static_cast<std::size_t>(rows));
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < d; ++j) x(i, j) = normal(rng);
      y[static_cast<std::size_t>(i)] = label(rng);
    }
    return ClientDataset::from(std::move(x), std::move(y), c);
  };

  double worst_oracle = 0;
  std::vector<Vector> samples;
  for (int rep = 0; rep < 200; ++rep) {
    const ClientDataset ds = draw(n);
    const LocalUpdate u = local_update(model, ds, train, static_cast<std::uint64_t>(rep));
    Vector oracle = Vector::Zero(c);
    for (Index i = 0; i < n; ++i)
      oracle -= eta * bias_grad_closed_form(forward(model, ds.features.row(i).transpose()).probs,
                                            ds.labels[static_cast<std::size_t>(i)]);
    oracle /= static_cast<double>(n);
    worst_oracle = std::max(worst_oracle, (u.delta_b - oracle).cwiseAbs().maxCoeff());
    samples.push_back(u.delta_b);
  }
  const ConfusionAverages conf = confusion_averages(model, draw(400000));
  const Vector expected = expected_bias_update(LabelDistribution::from_probs(label_probs), conf, eta, 1);
  double worst_z = 0;
  for (Index i = 0; i < c; ++i) {
    std::vector<double> xs;
    for (const auto& s : samples) xs.push_back(s(i));
    worst_z = std::max(worst_z, std::abs(stats::mean(xs) - expected(i)) / stats::standard_error(xs));
  }
  return {worst_oracle <= 1e-10 && worst_z <= 3.0,
          fmt("max oracle error %.2e, max |mean - expected| = %.2f standard errors", worst_oracle, worst_z)};
}

double warmup_spearman(const ExperimentConfig& cfg, std::uint64_t seed) {
  Federation fed(cfg, seed);
  for (int t = 1; t <= fed.warmup_length(); ++t) fed.run_round(t);
  const Vector est = fed.estimated_entropies();
  std::vector<double> truth, guess;
  for (std::size_t k = 0; k < cfg.num_clients; ++k) {
    truth.push_back(fed.distributions()[k].entropy);
    guess.push_back(est(static_cast<Index>(k)));
  }
  return stats::spearman(guess, truth);
}

// 3. Rank fidelity of the entropy estimate after warm-up.
Outcome estimator_fidelity() {
  const ExperimentConfig sgd = config("default.json");
  const ExperimentConfig adam = config("adam.json");
  std::vector<double> rs, ra;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    rs.push_back(warmup_spearman(sgd, seed));
    ra.push_back(warmup_spearman(adam, seed));
  }
  const double ms = stats::mean(rs), ma = stats::mean(ra);
  return {ms >= 0.8 && ma >= 0.6, fmt("mean Spearman SGD %.3f (>= 0.8), Adam %.3f (>= 0.6)", ms, ma)};
}

// 4. Monte-Carlo check of the entropy-gap lower bound.
Outcome theorem1_check() {
  const double eta = 0.05, temperature = 0.0025;
  const std::size_t n = 200;
  BlobSpec spec;
  spec.per_class = 2000;
  spec.separation = 0.35;
  spec.seed = 404;
  const TrainTestSplit data = generate_blobs(spec);
  const Index c = spec.num_classes;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < data.train.labels.size(); ++i)
    by_class[static_cast<std::size_t>(data.train.labels[i])].push_back(i);

  Rng rng(405);
  const MlpModel model = MlpModel::random({spec.dim, 64, c}, rng);
  const ConfusionAverages conf = confusion_averages(model, data.test);
  TrainConfig train;
  train.learning_rate = eta;
  train.local_epochs = 1;
  train.batch_size = static_cast<int>(n);
  const EstimatorConfig est{temperature};

  std::vector<std::size_t> balanced(static_cast<std::size_t>(c), n / static_cast<std::size_t>(c));
  std::vector<std::size_t> single(static_cast<std::size_t>(c), 0);
  single[0] = n;
  std::vector<double> gaps;
  for (int rep = 0; rep < 400; ++rep) {
    const ClientDataset u = sample_rows(data.train, by_class, balanced, rng);
    const ClientDataset k = sample_rows(data.train, by_class, single, rng);
    const double hu = estimate_entropy(local_update(model, u, train, 2 * rep).delta_b, est);
    const double hk = estimate_entropy(local_update(model, k, train, 2 * rep + 1).delta_b, est);
    gaps.push_back(hu - hk);
  }
  const double rhs = theorem1_rhs(LabelDistribution::uniform(c), LabelDistribution::one_hot(c, 0), conf, eta, 1,
                                  temperature);
  const double mean = stats::mean(gaps), se = stats::standard_error(gaps);
  return {mean > rhs - 3 * se, fmt("E[H_u - H_k] = %.4f (se %.4f) vs bound %.4f, delta %.4f", mean, se, rhs, conf.delta)};
}

// 5. Envelope fit over the gradient-gap scatter.
Outcome assumption_harness() {
  ExperimentConfig cfg = config("default.json");
  cfg.eval_every = 20;
  Federation fed(cfg, 1);
  std::vector<ScatterPoint> points;
  auto probe = [&](int t) {
    const auto p = assumption_scatter(fed.partition().clients, fed.pooled(), fed.model(), fed.learning_rate(std::max(t, 1)), t);
    points.insert(points.end(), p.begin(), p.end());
  };
  probe(0);
  for (int t = 1; t <= cfg.rounds; ++t) {
    fed.run_round(t);
    if (t % cfg.eval_every == 0) probe(t);
  }
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    xs.push_back(p.entropy);
    ys.push_back(p.gap);
  }
  const EnvelopeFit fit = fit_envelope(points, fed.model().num_classes(), 0.9);
  const double rho = stats::spearman(xs, ys);
  const bool shape = fit.feasible && fit.params.kappa > fit.params.rho && fit.params.rho > 0;
  return {shape && fit.coverage >= 0.9 && rho < 0,
          fmt("%zu points, coverage %.3f (beta %.2f, rho %.3g, kappa %.3g), Spearman(entropy, gap) %.3f", points.size(),
              fit.coverage, fit.params.beta, fit.params.rho, fit.params.kappa, rho)};
}

// 6. Sampling policy normalization, annealing limit and first-draw frequencies.
Outcome policy_correctness() {
  Rng rng(606);
  const std::size_t n = 50, groups = 5;
  ClusterAssignment a;
  a.groups.resize(groups);
  for (ClientId k = 0; k < n; ++k) a.groups[k % groups].push_back(k);
  a.mean_entropy = (Vector::Random(groups).array() + 1.0).matrix();
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k < n; ++k) sizes.push_back(1 + k % 7);
  const Vector w = client_weights(sizes);

  const SelectionPolicyState s = hics_policy(a, 3.0, w);
  const SelectionPolicyState flat = hics_policy(a, 0.0, w);
  const double sum_err = std::abs(s.cluster_probs.sum() - 1.0);
  const double flat_err = (flat.cluster_probs.array() - 1.0 / groups).abs().maxCoeff();

  const Vector omega = s.first_draw_distribution(a);
  const int draws = 100000;
  Vector counts = Vector::Zero(static_cast<Index>(n));
  for (int i = 0; i < draws; ++i) counts(static_cast<Index>(select_hics(s, a, 1, rng).front())) += 1;
  double worst = 0;
  for (Index k = 0; k < static_cast<Index>(n); ++k) {
    const double sigma = std::sqrt(omega(k) * (1 - omega(k)) / draws);
    worst = std::max(worst, std::abs(counts(k) / draws - omega(k)) / sigma);
  }
  return {sum_err < 1e-12 && flat_err < 1e-12 && worst <= 3.0,
          fmt("|sum pi - 1| = %.1e, gamma=0 deviation %.1e, max first-draw deviation %.2f sigma", sum_err, flat_err,
              worst)};
}

// 7. Clustering separates extreme and near-uniform cohorts.
Outcome clustering_separation() {
  ExperimentConfig cfg = config("default.json");
  cfg.num_clients = 20;
  cfg.num_clusters = 2;
  cfg.alphas = {0.001, 10.0};
  cfg.lambda = 0.1;
  std::vector<double> purity;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Federation fed(cfg, seed);
    for (int t = 1; t <= fed.warmup_length(); ++t) fed.run_round(t);
    Matrix updates(20, fed.model().num_classes());
    for (Index k = 0; k < 20; ++k) updates.row(k) = fed.records()[static_cast<std::size_t>(k)].delta_b.transpose();
    const Dendrogram tree = ward_cluster(distance_matrix(updates, fed.estimated_entropies(), cfg.lambda), 2);
    std::size_t majority = 0;
    for (const auto& g : tree.assignment.groups) {
      std::size_t low = 0;
      for (ClientId k : g) low += fed.partition().cohort[k] == 0;
      majority += std::max(low, g.size() - low);
    }
    purity.push_back(static_cast<double>(majority) / 20.0);
  }
  const double m = stats::mean(purity);
  return {m >= 0.9, fmt("mean purity %.3f over 10 seeds (min %.2f)", m, *std::min_element(purity.begin(), purity.end()))};
}

std::vector<double> mean_curve(const ExperimentConfig& cfg) {
  std::vector<double> acc(static_cast<std::size_t>(cfg.rounds), 0.0);
  for (std::uint64_t seed : cfg.seeds) {
    const auto rounds = run_experiment(cfg, seed).rounds;
    for (std::size_t i = 0; i < rounds.size(); ++i) acc[i] += *rounds[i].test_accuracy / static_cast<double>(cfg.seeds.size());
  }
  return acc;
}

// 8. Rounds-to-target of HiCS vs random on the blob task.
Outcome end_to_end_speedup() {
  ExperimentConfig cfg = config("speedup.json");
  cfg.seeds = {1, 2, 3};
  cfg.selector = SelectorKind::Random;
  const std::vector<double> random_raw = mean_curve(cfg);
  cfg.selector = SelectorKind::Hics;
  const std::vector<double> hics_raw = mean_curve(cfg);
  const Vector random = savitzky_golay(random_raw).values;
  const Vector hics = savitzky_golay(hics_raw).values;
  const double target = random(149);
  std::vector<int> rounds(static_cast<std::size_t>(cfg.rounds));
  std::iota(rounds.begin(), rounds.end(), 1);
  const auto r_rounds = rounds_to_target(rounds, random_raw, target, true);
  const auto h_rounds = rounds_to_target(rounds, hics_raw, target, true);
  const double r_final = random(cfg.rounds - 1), h_final = hics(cfg.rounds - 1);
  if (!r_rounds || !h_rounds)
    return {false, fmt("target %.4f: HiCS never reached it; final %.4f vs random %.4f", target, h_final, r_final)};
  const double ratio = static_cast<double>(*h_rounds) / static_cast<double>(*r_rounds);
  return {ratio <= 0.8 && h_final >= r_final - 0.01,
          fmt("target %.4f: HiCS %d rounds vs random %d (ratio %.2f, <= 0.8); final %.4f vs %.4f", target, *h_rounds,
              *r_rounds, ratio, h_final, r_final)};
}

// 9. Byte-identical metrics across repeats and thread counts.
Outcome determinism() {
  ExperimentConfig cfg = config("default.json");
  cfg.rounds = 30;
  cfg.eval_every = 1;
  bool same = true;
  std::string which;
  for (auto kind : {SelectorKind::Hics, SelectorKind::Random, SelectorKind::PowD, SelectorKind::ClusteredSampling,
                    SelectorKind::DivFl}) {
    cfg.selector = kind;
    ::setenv("FEDSIM_THREADS", "1", 1);
    const std::string a = metrics_csv(run_experiment(cfg, 9).rounds);
    const std::string b = metrics_csv(run_experiment(cfg, 9).rounds);
    ::setenv("FEDSIM_THREADS", "4", 1);
    const std::string c = metrics_csv(run_experiment(cfg, 9).rounds);
    if (a != b || a != c) {
      same = false;
      which += std::string(" ") + std::string(to_string(kind));
    }
  }
  ::unsetenv("FEDSIM_THREADS");
  return {same, same ? "all selectors identical across repeats and FEDSIM_THREADS=1/4" : "differs:" + which};
}

// 10. Selector cost counters.
Outcome cost_accounting() {
  ExperimentConfig cfg = config("default.json");
  cfg.rounds = 12;
  std::map<SelectorKind, Index> dims;
  Index params = 0, classes = 0;
  for (auto kind : {SelectorKind::Hics, SelectorKind::PowD, SelectorKind::ClusteredSampling, SelectorKind::DivFl}) {
    cfg.selector = kind;
    const ExperimentResult r = run_experiment(cfg, 1);
    dims[kind] = r.rounds.back().cost.vector_dim;
    params = r.num_parameters;
    classes = r.num_classes;
  }
  const double h = static_cast<double>(dims[SelectorKind::Hics]);
  const double worst = std::min({dims[SelectorKind::PowD], dims[SelectorKind::ClusteredSampling], dims[SelectorKind::DivFl]}) / h;
  return {dims[SelectorKind::Hics] == classes && worst >= 100,
          fmt("HiCS vector dim %ld (C = %ld); pow-d %ld, CS %ld, DivFL %ld of %ld parameters; min ratio %.0fx",
              static_cast<long>(dims[SelectorKind::Hics]), static_cast<long>(classes),
              static_cast<long>(dims[SelectorKind::PowD]), static_cast<long>(dims[SelectorKind::ClusteredSampling]),
              static_cast<long>(dims[SelectorKind::DivFl]), static_cast<long>(params), worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"bias-update oracle", bias_update_oracle},
      {"entropy estimator rank fidelity", estimator_fidelity},
      {"entropy-gap lower bound", theorem1_check},
      {"gradient-gap envelope", assumption_harness},
      {"policy correctness", policy_correctness},
      {"clustering separation", clustering_separation},
      {"end-to-end speedup", end_to_end_speedup},
      {"determinism", determinism},
      {"selector cost accounting", cost_accounting},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
