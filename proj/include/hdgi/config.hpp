#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdgi/eval.hpp"
#include "hdgi/hetgraph.hpp"
#include "hdgi/infomax.hpp"
#include "hdgi/io.hpp"

namespace hdgi {

// Configuration problems exit with a distinct code in the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string nodes;
  std::string edges;
  std::string features;
  std::optional<std::string> labels;
  std::string target_type;
};

struct EvalConfig {
  double train_ratio = 0.8;
  int repeats = 10;
  std::uint64_t seed = 0;
  int logreg_epochs = 300;
  double logreg_lr = 0.5;
  double logreg_l2 = 0.0;
  int logreg_patience = 20;
  int kmeans_max_iters = 100;
};

// One config file drives a whole run. Exactly one of dataset/synth is set.
struct RunConfig {
  std::optional<DatasetConfig> dataset;
  std::optional<SynthOptions> synth;
  std::vector<MetaPathSpec> metapaths;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs";

  void validate() const {
    if (dataset.has_value() == synth.has_value())
      throw ConfigError("config: exactly one of 'dataset' and 'synth' must be given");
    if (metapaths.empty()) throw ConfigError("config: at least one meta-path is required");
    for (const auto& m : metapaths) {
      try {
        m.validate();
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    try {
      train.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(eval.train_ratio > 0.0 && eval.train_ratio <= 0.8))
      throw ConfigError("config: eval.train_ratio must lie in (0, 0.8]");
    if (eval.repeats < 1) throw ConfigError("config: eval.repeats must be >= 1");
  }

  HeteroGraph load_or_generate_graph() const {
    if (synth) return synth_graph(*synth);
    return load_graph(dataset->nodes, dataset->edges, dataset->features, dataset->labels,
                      dataset->target_type);
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& where,
                                std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("config: unknown key '" + where + key + "'");
  }
}

template <typename T>
inline void read_if(const nlohmann::json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  detail::reject_unknown_keys(j, "",
                              {"dataset", "synth", "metapaths", "train", "eval", "output_dir"});
  RunConfig cfg;

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::reject_unknown_keys(d, "dataset.", {"nodes", "edges", "features", "labels", "target_type"});
    DatasetConfig ds;
    for (const char* key : {"nodes", "edges", "features", "target_type"})
      if (!d.contains(key)) throw ConfigError(std::string("config: dataset.") + key + " is required");
    ds.nodes = d.at("nodes").get<std::string>();
    ds.edges = d.at("edges").get<std::string>();
    ds.features = d.at("features").get<std::string>();
    ds.target_type = d.at("target_type").get<std::string>();
    if (d.contains("labels")) ds.labels = d.at("labels").get<std::string>();
    cfg.dataset = std::move(ds);
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::reject_unknown_keys(s, "synth.",
                                {"n_target", "n_aux_per_type", "n_classes", "edge_density", "noise",
                                 "feature_dim", "seed", "second_aux_noise", "feature_scale"});
    SynthOptions so;
    detail::read_if(s, "n_target", so.n_target);
    detail::read_if(s, "n_aux_per_type", so.n_aux_per_type);
    detail::read_if(s, "n_classes", so.n_classes);
    detail::read_if(s, "edge_density", so.edge_density);
    detail::read_if(s, "noise", so.noise);
    detail::read_if(s, "feature_dim", so.feature_dim);
    detail::read_if(s, "seed", so.seed);
    detail::read_if(s, "second_aux_noise", so.second_aux_noise);
    detail::read_if(s, "feature_scale", so.feature_scale);
    cfg.synth = so;
  }

  if (j.contains("metapaths")) {
    if (!j.at("metapaths").is_array()) throw ConfigError("config: metapaths must be an array");
    for (const auto& m : j.at("metapaths")) {
      detail::reject_unknown_keys(m, "metapaths[].", {"name", "chain"});
      MetaPathSpec spec;
      if (!m.contains("name") || !m.contains("chain"))
        throw ConfigError("config: each meta-path needs 'name' and 'chain'");
      spec.name = m.at("name").get<std::string>();
      spec.edge_type_chain = m.at("chain").get<std::vector<std::string>>();
      cfg.metapaths.push_back(std::move(spec));
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(
        t, "train.",
        {"encoder", "readout", "epochs", "patience", "learning_rate", "seed", "rep_dim", "q_dim",
         "heads", "input_dropout", "depth", "gcn_prelu", "gat_activation", "per_branch_beta",
         "weight_decay"});
    if (t.contains("encoder")) cfg.train.encoder = detail::parse_encoder(t.at("encoder").get<std::string>());
    if (t.contains("readout")) cfg.train.readout = detail::parse_readout(t.at("readout").get<std::string>());
    detail::read_if(t, "epochs", cfg.train.epochs);
    detail::read_if(t, "patience", cfg.train.patience);
    detail::read_if(t, "learning_rate", cfg.train.learning_rate);
    detail::read_if(t, "seed", cfg.train.seed);
    detail::read_if(t, "rep_dim", cfg.train.rep_dim);
    detail::read_if(t, "q_dim", cfg.train.q_dim);
    detail::read_if(t, "heads", cfg.train.heads);
    detail::read_if(t, "input_dropout", cfg.train.input_dropout);
    detail::read_if(t, "depth", cfg.train.depth);
    detail::read_if(t, "gcn_prelu", cfg.train.gcn_prelu);
    if (t.contains("gat_activation"))
      cfg.train.gat_activation = detail::parse_gat_activation(t.at("gat_activation").get<std::string>());
    detail::read_if(t, "per_branch_beta", cfg.train.per_branch_beta);
    detail::read_if(t, "weight_decay", cfg.train.weight_decay);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown_keys(e, "eval.",
                                {"train_ratio", "repeats", "seed", "logreg_epochs", "logreg_lr",
                                 "logreg_l2", "logreg_patience", "kmeans_max_iters"});
    detail::read_if(e, "train_ratio", cfg.eval.train_ratio);
    detail::read_if(e, "repeats", cfg.eval.repeats);
    detail::read_if(e, "seed", cfg.eval.seed);
    detail::read_if(e, "logreg_epochs", cfg.eval.logreg_epochs);
    detail::read_if(e, "logreg_lr", cfg.eval.logreg_lr);
    detail::read_if(e, "logreg_l2", cfg.eval.logreg_l2);
    detail::read_if(e, "logreg_patience", cfg.eval.logreg_patience);
    detail::read_if(e, "kmeans_max_iters", cfg.eval.kmeans_max_iters);
  }

  detail::read_if(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  try {
    return parse_config_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

// Resolved config as JSON: defaults applied, suitable for the run directory.
inline nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  if (cfg.dataset) {
    nlohmann::json d;
    d["nodes"] = cfg.dataset->nodes;
    d["edges"] = cfg.dataset->edges;
    d["features"] = cfg.dataset->features;
    if (cfg.dataset->labels) d["labels"] = *cfg.dataset->labels;
    d["target_type"] = cfg.dataset->target_type;
    j["dataset"] = std::move(d);
  }
  if (cfg.synth) {
    nlohmann::json s;
    s["n_target"] = cfg.synth->n_target;
    s["n_aux_per_type"] = cfg.synth->n_aux_per_type;
    s["n_classes"] = cfg.synth->n_classes;
    s["edge_density"] = cfg.synth->edge_density;
    s["noise"] = cfg.synth->noise;
    s["feature_dim"] = cfg.synth->feature_dim;
    s["seed"] = cfg.synth->seed;
    s["second_aux_noise"] = cfg.synth->second_aux_noise;
    s["feature_scale"] = cfg.synth->feature_scale;
    j["synth"] = std::move(s);
  }
  j["metapaths"] = nlohmann::json::array();
  for (const auto& m : cfg.metapaths)
    j["metapaths"].push_back({{"name", m.name}, {"chain", m.edge_type_chain}});
  nlohmann::json t;
  t["encoder"] = detail::encoder_name(cfg.train.encoder);
  t["readout"] = detail::readout_name(cfg.train.readout);
  t["epochs"] = cfg.train.epochs;
  t["patience"] = cfg.train.patience;
  t["learning_rate"] = cfg.train.resolved_learning_rate();
  t["seed"] = cfg.train.seed;
  t["rep_dim"] = cfg.train.resolved_rep_dim();
  t["q_dim"] = cfg.train.q_dim;
  t["heads"] = cfg.train.heads;
  t["input_dropout"] = cfg.train.input_dropout;
  t["depth"] = cfg.train.depth;
  t["gcn_prelu"] = cfg.train.gcn_prelu;
  t["gat_activation"] = detail::gat_activation_name(cfg.train.gat_activation);
  t["per_branch_beta"] = cfg.train.per_branch_beta;
  t["weight_decay"] = cfg.train.weight_decay;
  j["train"] = std::move(t);
  nlohmann::json e;
  e["train_ratio"] = cfg.eval.train_ratio;
  e["repeats"] = cfg.eval.repeats;
  e["seed"] = cfg.eval.seed;
  e["logreg_epochs"] = cfg.eval.logreg_epochs;
  e["logreg_lr"] = cfg.eval.logreg_lr;
  e["logreg_l2"] = cfg.eval.logreg_l2;
  e["logreg_patience"] = cfg.eval.logreg_patience;
  e["kmeans_max_iters"] = cfg.eval.kmeans_max_iters;
  j["eval"] = std::move(e);
  j["output_dir"] = cfg.output_dir;
  return j;
}

// FNV-1a hash of the resolved config without output_dir and the training
// seed; run directories are named <hash>-s<seed>.
inline std::string config_hash(const RunConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  j.erase("output_dir");
  j["train"].erase("seed");
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16).substr(0, 12);
}

inline std::string run_dir_name(const RunConfig& cfg) {
  return cfg.output_dir + "/" + config_hash(cfg) + "-s" + std::to_string(cfg.train.seed);
}

}  // namespace hdgi
