#include "fedsim/engine.hpp"

#include "fedsim/smoothing.hpp"
#include "fedsim/stats.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace fedsim {

namespace {
constexpr Index kFullUpdateLimit = 100000;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  if (num_clients < 1) errors.push_back("num_clients must be >= 1");
  if (clients_per_round < 1) errors.push_back("clients_per_round must be >= 1");
  if (clients_per_round > num_clients) errors.push_back("clients_per_round must not exceed num_clients");
  if (num_clusters < 1 || num_clusters > num_clients) errors.push_back("num_clusters must lie in [1, num_clients]");
  if (clients_per_round >= 1 && rounds < warmup_rounds(num_clients, clients_per_round))
    errors.push_back("rounds must be >= ceil(num_clients / clients_per_round)");
  if (pow_d != 0 && (pow_d < clients_per_round || pow_d > num_clients))
    errors.push_back("pow_d must lie in [clients_per_round, num_clients]");
  if (!(lambda >= 0 && lambda <= 1)) errors.push_back("lambda must lie in [0, 1]");
  if (!(estimator.temperature > 0)) errors.push_back("temperature must be > 0");
  if (eval_every < 1) errors.push_back("eval_every must be >= 1");
  if (seeds.empty()) errors.push_back("at least one seed is required");
  if (alphas.empty()) errors.push_back("at least one alpha is required");
  if (alphas.size() > num_clients) errors.push_back("more alpha cohorts than clients");
  for (double a : alphas)
    if (!(a > 0)) errors.push_back("every alpha must be > 0");
  for (Index h : hidden)
    if (h < 1) errors.push_back("hidden widths must be >= 1");
  if (dataset.blobs.num_classes < 2) errors.push_back("dataset needs at least 2 classes");
  if (dataset.kind == DatasetConfig::Kind::Blobs) {
    if (dataset.blobs.per_class < 1) errors.push_back("per_class must be >= 1");
    if (dataset.blobs.dim < 2) errors.push_back("dim must be >= 2");
  }
  try {
    train.validate();
  } catch (const ConfigError& e) {
    errors.emplace_back(e.what());
  }
  if (!errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::vector<Index> ExperimentConfig::widths(Index input_dim) const {
  std::vector<Index> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(dataset.num_classes());
  return w;
}

Evaluation evaluate(const MlpModel& model, const ClientDataset& test) {
  if (test.empty()) throw DomainError("evaluation on an empty test set");
  const Matrix probs = predict_probs(model, test.features);
  std::size_t correct = 0;
  double loss = 0;
  for (Index j = 0; j < probs.cols(); ++j) {
    Index arg = 0;
    for (Index c = 1; c < probs.rows(); ++c)
      if (probs(c, j) > probs(arg, j)) arg = c;
    const Index y = test.labels[static_cast<std::size_t>(j)];
    if (arg == y) ++correct;
    loss -= std::log(std::max(probs(y, j), kProbFloor));
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

double system_heterogeneity(std::span<const LabelDistribution> dists, const Vector& weights, double beta) {
  if (static_cast<Index>(dists.size()) != weights.size()) throw ConfigError("one weight per distribution required");
  double h = 0;
  for (std::size_t k = 0; k < dists.size(); ++k) {
    const double log_c = std::log(static_cast<double>(dists[k].probs.size()));
    h += weights(static_cast<Index>(k)) * std::exp(beta * (dists[k].entropy - log_c));
  }
  return h;
}

Vector aggregate(const Vector& global, std::span<const Vector> deltas) {
  if (deltas.empty()) throw DomainError("aggregation of no local models");
  Vector sum = Vector::Zero(global.size());
  for (const auto& d : deltas) sum += global + d;
  return sum / static_cast<double>(deltas.size());
}

unsigned worker_threads() {
  if (const char* env = std::getenv("FEDSIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

Federation::Federation(ExperimentConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed), warmup_(0) {
  cfg_.validate();
  if (cfg_.dataset.kind == DatasetConfig::Kind::Blobs) {
    BlobSpec spec = cfg_.dataset.blobs;
    spec.seed = derive_seed(seed_, static_cast<std::uint64_t>(Stream::Data));
    auto split = generate_blobs(spec);
    pooled_ = std::move(split.train);
    test_ = std::move(split.test);
  } else {
    const Index c = cfg_.dataset.num_classes();
    pooled_ = load_idx(cfg_.dataset.train_images, cfg_.dataset.train_labels, c);
    test_ = load_idx(cfg_.dataset.test_images, cfg_.dataset.test_labels, c);
  }
  setup();
}

Federation::Federation(ExperimentConfig cfg, std::uint64_t seed, ClientDataset pooled, ClientDataset test)
    : cfg_(std::move(cfg)), seed_(seed), pooled_(std::move(pooled)), test_(std::move(test)), warmup_(0) {
  cfg_.validate();
  setup();
}

void Federation::setup() {
  PartitionSpec spec{cfg_.num_clients, cfg_.alphas, derive_seed(seed_, static_cast<std::uint64_t>(Stream::Partition))};
  partition_ = dirichlet_partition(pooled_, spec);
  std::vector<std::size_t> sizes;
  for (const auto& c : partition_.clients) {
    dists_.push_back(label_distribution(c));
    sizes.push_back(static_cast<std::size_t>(c.size()));
  }
  weights_ = client_weights(sizes);
  Rng init = make_rng(seed_, Stream::Init);
  model_ = MlpModel::random(cfg_.widths(pooled_.dim()), init);
  records_.resize(cfg_.num_clients);
  for (ClientId k = 0; k < cfg_.num_clients; ++k) {
    records_[k].client_id = k;
    records_[k].delta_b = Vector::Zero(model_.num_classes());
  }
  if (cfg_.selector == SelectorKind::ClusteredSampling) {
    const Index dim = model_.num_parameters() <= kFullUpdateLimit ? model_.num_parameters() : model_.num_classes();
    update_cache_ = Matrix::Zero(static_cast<Index>(cfg_.num_clients), dim);
  }
  warmup_ = WarmupPool(cfg_.num_clients);
}

double Federation::learning_rate(int t) const {
  if (!cfg_.lr_step_decay) return cfg_.train.learning_rate;
  return cfg_.train.learning_rate * std::pow(0.5, static_cast<double>((t - 1) / 10));
}

std::uint64_t Federation::local_seed(int t, ClientId k) const {
  return derive_seed(seed_ ^ static_cast<std::uint64_t>(Stream::LocalUpdate), static_cast<std::uint64_t>(t), k);
}

Vector Federation::estimated_entropies() const {
  Vector h(static_cast<Index>(records_.size()));
  for (std::size_t k = 0; k < records_.size(); ++k)
    h(static_cast<Index>(k)) = estimate_entropy(records_[k].delta_b, cfg_.estimator);
  return h;
}

Selection Federation::select(int t, Rng& rng) {
  const std::size_t n = cfg_.num_clients;
  const std::size_t k = cfg_.clients_per_round;
  const Index c = model_.num_classes();
  const Index params = model_.num_parameters();
  const auto pairs = static_cast<std::uint64_t>(n * (n - 1) / 2);
  Selection out;

  const bool uses_warmup = cfg_.selector == SelectorKind::Hics || cfg_.selector == SelectorKind::ClusteredSampling;
  if (uses_warmup && t <= warmup_length()) {
    out.clients = warmup_.draw(k, rng);
    return out;
  }

  switch (cfg_.selector) {
    case SelectorKind::Hics: {
      const Vector entropies = estimated_entropies();
      Matrix updates(static_cast<Index>(n), c);
      for (std::size_t i = 0; i < n; ++i) updates.row(static_cast<Index>(i)) = records_[i].delta_b.transpose();
      Dendrogram tree = ward_cluster(distance_matrix(updates, entropies, cfg_.lambda), cfg_.num_clusters);
      const ClusterAssignment assignment = annotate_means(tree.assignment, entropies);
      const double gamma = gamma_schedule(t, cfg_.rounds, cfg_.gamma0);
      SelectionPolicyState state = hics_policy(assignment, gamma, weights_);
      state.gamma0 = cfg_.gamma0;
      out.clients = select_hics(state, assignment, k, rng);
      out.cost = {c, static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(c) + pairs * 2u * static_cast<std::uint64_t>(c)};
      last_clustering_ = std::move(tree);
      break;
    }
    case SelectorKind::Random:
      out.clients = select_random(k, weights_, rng);
      break;
    case SelectorKind::PowD: {
      const std::size_t d = cfg_.pow_d == 0 ? n : cfg_.pow_d;
      ClientIds probed = d == n ? ClientIds{} : select_random(d, weights_, rng);
      if (d == n) {
        probed.resize(n);
        std::iota(probed.begin(), probed.end(), 0);
      }
      std::sort(probed.begin(), probed.end());
      std::vector<double> losses;
      for (ClientId id : probed) losses.push_back(evaluate(model_, partition_.clients[id]).loss);
      for (ClientId idx : select_powd(losses, k)) out.clients.push_back(probed[idx]);
      out.cost = {params, static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(params)};
      break;
    }
    case SelectorKind::ClusteredSampling: {
      out.clients = select_cs(update_cache_, k, weights_, rng);
      const Index dim = update_cache_.cols();
      out.cost = {dim, pairs * 2u * static_cast<std::uint64_t>(dim)};
      break;
    }
    case SelectorKind::DivFl: {
      // Ideal setting: a one-step gradient from every client at the current model.
      Matrix grads(static_cast<Index>(n), params);
      for (std::size_t i = 0; i < n; ++i)
        grads.row(static_cast<Index>(i)) = (-learning_rate(t) * full_gradient(model_, partition_.clients[i]).grad).transpose();
      out.clients = select_divfl(grads, k);
      out.cost = {params, static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(params) +
                              pairs * 2u * static_cast<std::uint64_t>(params)};
      break;
    }
  }
  return out;
}

RoundMetrics Federation::run_round(int t) {
  if (t < 1) throw ConfigError("rounds are 1-based");
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_rng(seed_, Stream::Selection, static_cast<std::uint64_t>(t));
  Selection sel = select(t, rng);

  const std::size_t expected = std::min(cfg_.clients_per_round, cfg_.num_clients);
  const bool warm = (cfg_.selector == SelectorKind::Hics || cfg_.selector == SelectorKind::ClusteredSampling) &&
                    t <= warmup_length();
  {
    std::set<ClientId> distinct(sel.clients.begin(), sel.clients.end());
    const bool count_ok = warm ? (!sel.clients.empty() && sel.clients.size() <= expected) : sel.clients.size() == expected;
    if (distinct.size() != sel.clients.size() || !count_ok || (!distinct.empty() && *distinct.rbegin() >= cfg_.num_clients))
      throw InvariantError("selector returned an invalid client set in round " + std::to_string(t));
  }

  // Local updates in canonical id order; results land in fixed slots.
  ClientIds order = sel.clients;
  std::sort(order.begin(), order.end());
  TrainConfig train = cfg_.train;
  train.learning_rate = learning_rate(t);
  std::vector<LocalUpdate> updates(order.size());
  {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < order.size(); i = next++) {
        try {
          updates[i] = local_update(model_, partition_.clients[order[i]], train, local_seed(t, order[i]));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const unsigned threads = std::min<unsigned>(worker_threads(), static_cast<unsigned>(order.size()));
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<Vector> deltas;
  std::vector<double> losses;
  std::vector<LabelDistribution> selected_dists;
  for (std::size_t i = 0; i < order.size(); ++i) {
    deltas.push_back(updates[i].delta_theta);
    losses.push_back(updates[i].train_loss);
    selected_dists.push_back(dists_[order[i]]);
    auto& rec = records_[order[i]];
    rec.delta_b = updates[i].delta_b;
    rec.last_updated_round = t;
    if (update_cache_.size() > 0) {
      const Index dim = update_cache_.cols();
      update_cache_.row(static_cast<Index>(order[i])) =
          (dim == model_.num_parameters() ? updates[i].delta_theta : updates[i].delta_b).transpose();
    }
  }
  model_.parameters() = aggregate(model_.parameters(), deltas);
  if (!model_.parameters().allFinite()) throw InvariantError("global model diverged in round " + std::to_string(t));

  RoundMetrics m;
  m.round = t;
  m.selector = cfg_.selector;
  m.selected = sel.clients;
  m.avg_train_loss = stats::mean(losses);
  m.std_train_loss = stats::stddev(losses);
  m.h_m_diag = system_heterogeneity(selected_dists, Vector::Constant(static_cast<Index>(order.size()), 1.0 / static_cast<double>(order.size())),
                                    cfg_.diag_beta);
  m.gamma_t = cfg_.selector == SelectorKind::Hics ? gamma_schedule(t, cfg_.rounds, cfg_.gamma0) : 0.0;
  m.warmup = warm;
  m.cost = sel.cost;
  total_cost_ += sel.cost;
  if (t % cfg_.eval_every == 0 || t == cfg_.rounds) {
    const Evaluation e = evaluate(model_, test_);
    m.test_accuracy = e.accuracy;
    m.test_loss = e.loss;
  }
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<RoundMetrics> Federation::run() {
  std::vector<RoundMetrics> out;
  out.reserve(static_cast<std::size_t>(cfg_.rounds));
  for (int t = 1; t <= cfg_.rounds; ++t) out.push_back(run_round(t));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  Federation fed(cfg, seed);
  ExperimentResult result;
  result.rounds = fed.run();
  result.total_cost = fed.total_cost();
  result.num_parameters = fed.model().num_parameters();
  result.num_classes = fed.model().num_classes();
  result.cs_full_updates = fed.model().num_parameters() <= kFullUpdateLimit;
  return result;
}

namespace {
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds) {
  out << "round,selector,selected_ids,avg_train_loss,std_train_loss,test_accuracy,h_m_diag,gamma_t\n";
  for (const auto& m : rounds) {
    out << m.round << ',' << to_string(m.selector) << ',';
    for (std::size_t i = 0; i < m.selected.size(); ++i) out << (i ? ";" : "") << m.selected[i];
    out << ',' << num(m.avg_train_loss) << ',' << num(m.std_train_loss) << ',';
    if (m.test_accuracy) out << num(*m.test_accuracy);
    out << ',' << num(m.h_m_diag) << ',' << num(m.gamma_t) << '\n';
  }
}

std::string metrics_csv(std::span<const RoundMetrics> rounds) {
  std::ostringstream os;
  write_metrics_csv(os, rounds);
  return os.str();
}

std::optional<int> rounds_to_target(std::span<const int> rounds, std::span<const double> accuracy, double target,
                                    bool smooth) {
  if (rounds.size() != accuracy.size()) throw ConfigError("rounds and accuracy differ in length");
  Vector curve = Eigen::Map<const Vector>(accuracy.data(), static_cast<Index>(accuracy.size()));
  if (smooth) curve = savitzky_golay(accuracy).values;
  for (std::size_t i = 0; i < rounds.size(); ++i)
    if (curve(static_cast<Index>(i)) >= target) return rounds[i];
  return std::nullopt;
}

}  // namespace fedsim
