#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdgi/eval.hpp"
#include "hdgi/hetgraph.hpp"
#include "hdgi/infomax.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

// Embeddings file: header line "N F", then N tab-separated rows at 17
// significant digits so a write/read round trip is value-exact.
inline void write_embeddings(const Tensor& h, const std::string& path) {
  if (path.empty()) throw std::invalid_argument("write_embeddings: empty path");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_embeddings: cannot write " + path);
  out << h.rows << ' ' << h.cols << '\n';
  for (int i = 0; i < h.rows; ++i) {
    for (int j = 0; j < h.cols; ++j) {
      if (j) out << '\t';
      out << detail::format_double(h.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_embeddings: write failed for " + path);
}

inline Tensor read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_embeddings: cannot open " + path);
  int n = 0, f = 0;
  if (!(in >> n >> f)) throw std::runtime_error("read_embeddings: bad header in " + path);
  Tensor h(n, f);
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(in >> h.data[k]))
      throw std::runtime_error("read_embeddings: truncated data in " + path);
  }
  return h;
}

// Training log: one line per epoch, `epoch<TAB>loss<TAB>beta1,...,betaP`.
inline void write_training_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_training_log: cannot write " + path);
  for (const auto& entry : log) {
    out << entry.epoch << '\t' << detail::format_double(entry.loss) << '\t';
    for (std::size_t i = 0; i < entry.betas.size(); ++i) {
      if (i) out << ',';
      out << detail::format_double(entry.betas[i]);
    }
    out << '\n';
  }
}

namespace detail {

inline const char* encoder_name(EncoderKind k) { return k == EncoderKind::kGcn ? "gcn" : "gat"; }
inline const char* readout_name(ReadoutKind k) { return k == ReadoutKind::kMean ? "mean" : "pool"; }
inline const char* gat_activation_name(GatActivation a) {
  return a == GatActivation::kElu ? "elu" : "prelu";
}

inline EncoderKind parse_encoder(const std::string& s) {
  if (s == "gcn" || s == "hdgi-c") return EncoderKind::kGcn;
  if (s == "gat" || s == "hdgi-a") return EncoderKind::kGat;
  throw std::invalid_argument("unknown encoder kind '" + s + "' (expected gcn|gat)");
}

inline ReadoutKind parse_readout(const std::string& s) {
  if (s == "mean") return ReadoutKind::kMean;
  if (s == "pool") return ReadoutKind::kPool;
  throw std::invalid_argument("unknown readout kind '" + s + "' (expected mean|pool)");
}

inline GatActivation parse_gat_activation(const std::string& s) {
  if (s == "elu") return GatActivation::kElu;
  if (s == "prelu") return GatActivation::kPrelu;
  throw std::invalid_argument("unknown gat activation '" + s + "' (expected elu|prelu)");
}

}  // namespace detail

// Checkpoint: versioned text dump of the model shape plus every trainable
// tensor with a shape header, values at 17 significant digits.
inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  const ModelShape& s = params.shape;
  out << "HDGI-CHECKPOINT v1\n";
  out << "encoder " << detail::encoder_name(s.encoder) << '\n';
  out << "readout " << detail::readout_name(s.readout) << '\n';
  out << "metapaths " << s.metapaths << '\n';
  out << "feature_dim " << s.feature_dim << '\n';
  out << "rep_dim " << s.rep_dim << '\n';
  out << "q_dim " << s.q_dim << '\n';
  out << "heads " << s.heads << '\n';
  out << "depth " << s.depth << '\n';
  out << "gcn_prelu " << (s.gcn_prelu ? 1 : 0) << '\n';
  out << "gat_activation " << detail::gat_activation_name(s.gat_activation) << '\n';
  const auto named = params.named_tensors();
  out << "tensors " << named.size() << '\n';
  for (const auto& [name, tensor] : named) {
    out << "tensor " << name << ' ' << tensor->rows << ' ' << tensor->cols << '\n';
    for (int r = 0; r < tensor->rows; ++r) {
      for (int c = 0; c < tensor->cols; ++c) {
        if (c) out << '\t';
        out << detail::format_double(tensor->at(r, c));
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "HDGI-CHECKPOINT v1")
    throw std::runtime_error("load_checkpoint: " + path + " is not a v1 checkpoint");

  ModelShape shape;
  std::size_t tensor_count = 0;
  auto next_kv = [&](const std::string& expected_key) {
    if (!std::getline(in, line))
      throw std::runtime_error("load_checkpoint: truncated header in " + path);
    std::istringstream ss(line);
    std::string key, value;
    ss >> key >> value;
    if (key != expected_key)
      throw std::runtime_error("load_checkpoint: expected '" + expected_key + "', got '" + key + "'");
    return value;
  };
  shape.encoder = detail::parse_encoder(next_kv("encoder"));
  shape.readout = detail::parse_readout(next_kv("readout"));
  shape.metapaths = std::stoi(next_kv("metapaths"));
  shape.feature_dim = std::stoi(next_kv("feature_dim"));
  shape.rep_dim = std::stoi(next_kv("rep_dim"));
  shape.q_dim = std::stoi(next_kv("q_dim"));
  shape.heads = std::stoi(next_kv("heads"));
  shape.depth = std::stoi(next_kv("depth"));
  shape.gcn_prelu = std::stoi(next_kv("gcn_prelu")) != 0;
  shape.gat_activation = detail::parse_gat_activation(next_kv("gat_activation"));
  tensor_count = static_cast<std::size_t>(std::stoul(next_kv("tensors")));

  Rng rng(0);  // structure only; every value is overwritten below
  ModelParams params = init_model_params(shape, rng);
  std::map<std::string, TensorPtr> by_name;
  for (const auto& [name, tensor] : params.named_tensors()) by_name[name] = tensor;
  if (by_name.size() != tensor_count)
    throw std::runtime_error("load_checkpoint: tensor count " + std::to_string(tensor_count) +
                             " does not match shape header");

  for (std::size_t t = 0; t < tensor_count; ++t) {
    std::string tag, name;
    int rows = 0, cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "tensor")
      throw std::runtime_error("load_checkpoint: malformed tensor header in " + path);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("load_checkpoint: unexpected tensor '" + name + "'");
    if (it->second->rows != rows || it->second->cols != cols)
      throw std::runtime_error("load_checkpoint: tensor '" + name + "' shape mismatch");
    for (std::size_t k = 0; k < it->second->size(); ++k) {
      if (!(in >> it->second->data[k]))
        throw std::runtime_error("load_checkpoint: truncated values for '" + name + "'");
    }
  }
  return params;
}

// Plain-text and JSON renderings of evaluation reports. JSON key set:
// metric, mean, std, values, ratio, repeats, seed.
inline std::string eval_report_text(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    out << r.metric << ": mean " << r.mean << " std " << r.stddev << " (repeats " << r.repeats;
    if (r.train_ratio > 0.0) out << ", train ratio " << r.train_ratio;
    out << ", seed " << r.seed << ")\n  values:";
    for (double v : r.values) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json eval_report_json(const std::vector<EvalReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j;
    j["metric"] = r.metric;
    j["mean"] = r.mean;
    j["std"] = r.stddev;
    j["values"] = r.values;
    j["ratio"] = r.train_ratio;
    j["repeats"] = r.repeats;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline void write_eval_reports(const std::vector<EvalReport>& reports,
                               const std::string& text_path, const std::string& json_path) {
  {
    std::ofstream out(text_path);
    if (!out) throw std::runtime_error("write_eval_reports: cannot write " + text_path);
    out << eval_report_text(reports);
  }
  {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("write_eval_reports: cannot write " + json_path);
    out << eval_report_json(reports).dump(2) << '\n';
  }
}

}  // namespace hdgi
