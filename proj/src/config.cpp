#include "fedsim/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>

#if defined(__unix__) || defined(__APPLE__)
#include <sys/utsname.h>
#endif

namespace fedsim {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, recording problems instead of throwing.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(where() + " must be an object");
  }

  ~ObjectReader() {
    if (!obj_.is_object()) return;
    for (const auto& [key, _] : obj_.items())
      if (!seen_.contains(key)) errors_.push_back("unknown key '" + qualified(key) + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back("key '" + qualified(key) + "' has the wrong type");
    }
  }

  void nested(const std::string& key, const std::function<void(ObjectReader&)>& body) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    ObjectReader inner(obj_.at(key), qualified(key), errors_);
    if (obj_.at(key).is_object()) body(inner);
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::SgdMomentum: return "sgd_momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "sgd";
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (doc.is_object() && doc.contains("config") && doc.contains("seed")) {
    ExperimentConfig cfg = parse_config(doc.at("config"));
    cfg.seeds = {doc.at("seed").get<std::uint64_t>()};
    return cfg;
  }

  ExperimentConfig cfg;
  std::vector<std::string> errors;
  {
    ObjectReader root(doc, "", errors);
    root.get("num_clients", cfg.num_clients);
    root.get("clients_per_round", cfg.clients_per_round);
    std::optional<std::size_t> clusters;
    {
      std::size_t m = 0;
      root.get("num_clusters", m);
      if (doc.is_object() && doc.contains("num_clusters")) clusters = m;
    }
    cfg.num_clusters = clusters.value_or(cfg.clients_per_round);
    root.get("rounds", cfg.rounds);
    std::string selector = std::string(to_string(cfg.selector));
    root.get("selector", selector);
    try {
      cfg.selector = selector_from_string(selector);
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
    root.get("gamma0", cfg.gamma0);
    root.get("pow_d", cfg.pow_d);
    root.get("eval_every", cfg.eval_every);
    root.get("diag_beta", cfg.diag_beta);
    root.get("seeds", cfg.seeds);
    std::string out = cfg.output_dir.string();
    root.get("output_dir", out);
    cfg.output_dir = out;

    root.nested("train", [&](ObjectReader& r) {
      r.get("learning_rate", cfg.train.learning_rate);
      r.get("local_epochs", cfg.train.local_epochs);
      r.get("batch_size", cfg.train.batch_size);
      r.get("prox_mu", cfg.train.prox_mu);
      r.get("lr_step_decay", cfg.lr_step_decay);
      std::string opt = optimizer_name(cfg.train.optimizer.kind);
      r.get("optimizer", opt);
      if (opt == "sgd") cfg.train.optimizer.kind = OptimizerKind::Sgd;
      else if (opt == "sgd_momentum") cfg.train.optimizer.kind = OptimizerKind::SgdMomentum;
      else if (opt == "adam") cfg.train.optimizer.kind = OptimizerKind::Adam;
      else errors.push_back("unknown optimizer '" + opt + "'");
      r.get("momentum", cfg.train.optimizer.momentum);
      r.get("adam_beta1", cfg.train.optimizer.beta1);
      r.get("adam_beta2", cfg.train.optimizer.beta2);
      r.get("adam_epsilon", cfg.train.optimizer.epsilon);
    });
    root.nested("estimator", [&](ObjectReader& r) { r.get("temperature", cfg.estimator.temperature); });
    root.nested("cluster", [&](ObjectReader& r) { r.get("lambda", cfg.lambda); });
    root.nested("partition", [&](ObjectReader& r) { r.get("alphas", cfg.alphas); });
    root.nested("model", [&](ObjectReader& r) { r.get("hidden", cfg.hidden); });
    root.nested("dataset", [&](ObjectReader& r) {
      std::string kind = "blobs";
      r.get("kind", kind);
      if (kind == "blobs") cfg.dataset.kind = DatasetConfig::Kind::Blobs;
      else if (kind == "idx") cfg.dataset.kind = DatasetConfig::Kind::Idx;
      else errors.push_back("unknown dataset kind '" + kind + "'");
      r.get("num_classes", cfg.dataset.blobs.num_classes);
      r.get("per_class", cfg.dataset.blobs.per_class);
      r.get("dim", cfg.dataset.blobs.dim);
      r.get("spread", cfg.dataset.blobs.spread);
      r.get("separation", cfg.dataset.blobs.separation);
      std::string p;
      auto path = [&](const char* key, std::filesystem::path& dst) {
        p = dst.string();
        r.get(key, p);
        dst = p;
      };
      path("train_images", cfg.dataset.train_images);
      path("train_labels", cfg.dataset.train_labels);
      path("test_images", cfg.dataset.test_images);
      path("test_labels", cfg.dataset.test_labels);
    });
  }
  if (!errors.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  json dataset = {{"kind", cfg.dataset.kind == DatasetConfig::Kind::Blobs ? "blobs" : "idx"},
                  {"num_classes", cfg.dataset.blobs.num_classes}};
  if (cfg.dataset.kind == DatasetConfig::Kind::Blobs) {
    dataset["per_class"] = cfg.dataset.blobs.per_class;
    dataset["dim"] = cfg.dataset.blobs.dim;
    dataset["spread"] = cfg.dataset.blobs.spread;
    dataset["separation"] = cfg.dataset.blobs.separation;
  } else {
    dataset["train_images"] = cfg.dataset.train_images.string();
    dataset["train_labels"] = cfg.dataset.train_labels.string();
    dataset["test_images"] = cfg.dataset.test_images.string();
    dataset["test_labels"] = cfg.dataset.test_labels.string();
  }
  return {
      {"num_clients", cfg.num_clients},
      {"clients_per_round", cfg.clients_per_round},
      {"num_clusters", cfg.num_clusters},
      {"rounds", cfg.rounds},
      {"selector", std::string(to_string(cfg.selector))},
      {"gamma0", cfg.gamma0},
      {"pow_d", cfg.pow_d},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"local_epochs", cfg.train.local_epochs},
        {"batch_size", cfg.train.batch_size},
        {"optimizer", optimizer_name(cfg.train.optimizer.kind)},
        {"momentum", cfg.train.optimizer.momentum},
        {"adam_beta1", cfg.train.optimizer.beta1},
        {"adam_beta2", cfg.train.optimizer.beta2},
        {"adam_epsilon", cfg.train.optimizer.epsilon},
        {"prox_mu", cfg.train.prox_mu},
        {"lr_step_decay", cfg.lr_step_decay}}},
      {"estimator", {{"temperature", cfg.estimator.temperature}}},
      {"cluster", {{"lambda", cfg.lambda}}},
      {"partition", {{"alphas", cfg.alphas}}},
      {"model", {{"hidden", cfg.hidden}}},
      {"dataset", dataset},
      {"eval_every", cfg.eval_every},
      {"diag_beta", cfg.diag_beta},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir.string()},
  };
}

std::string code_version() {
#ifdef FEDSIM_VERSION
  return FEDSIM_VERSION;
#else
  return "0.1.0";
#endif
}

json run_manifest(const ExperimentConfig& cfg, std::uint64_t seed, const ExperimentResult& result) {
  json env = {{"build_id", code_version() + "+" + __DATE__}};
#if defined(__unix__) || defined(__APPLE__)
  utsname u{};
  if (uname(&u) == 0) env["os"] = std::string(u.sysname) + " " + u.release + " " + u.machine;
#endif
  return {
      {"config", to_json(cfg)},
      {"seed", seed},
      {"code_version", code_version()},
      {"selector", std::string(to_string(cfg.selector))},
      {"cs_update_vectors", result.cs_full_updates ? "full_model" : "output_bias"},
      {"model_parameters", result.num_parameters},
      {"num_classes", result.num_classes},
      {"selection_cost",
       {{"vector_dim", result.total_cost.vector_dim},
        {"entries_touched", result.total_cost.entries_touched},
        {"entries_per_round",
         result.rounds.empty() ? 0.0
                               : static_cast<double>(result.total_cost.entries_touched) /
                                     static_cast<double>(result.rounds.size())}}},
      {"environment", env},
  };
}

}  // namespace fedsim
