#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hdgi/random.hpp"
#include "hdgi/sparse.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

// Ordered list of edge-type names whose composition starts and ends at the
// graph's target type. The name sequence must read the same reversed.
struct MetaPathSpec {
  std::string name;
  std::vector<std::string> edge_type_chain;

  void validate() const {
    if (edge_type_chain.size() < 2)
      throw std::invalid_argument("meta-path '" + name + "': chain length must be >= 2");
    for (std::size_t i = 0, j = edge_type_chain.size() - 1; i < j; ++i, --j) {
      if (edge_type_chain[i] != edge_type_chain[j])
        throw std::invalid_argument("meta-path '" + name + "': chain is not symmetric");
    }
  }
};

struct EdgeTypeData {
  std::string src_type;
  std::string dst_type;
  std::vector<std::pair<int, int>> edges;  // type-local endpoint indices
};

// Typed multigraph with one designated target node type. Node indices are
// local to their type and assigned in input order. Immutable after
// construction; safe to share across threads.
class HeteroGraph {
 public:
  HeteroGraph(std::map<std::string, std::vector<std::string>> node_ids_by_type,
              std::map<std::string, EdgeTypeData> edges_by_type, std::string target_type,
              Tensor features, std::optional<std::vector<int>> labels = std::nullopt)
      : node_ids_by_type_(std::move(node_ids_by_type)),
        edges_by_type_(std::move(edges_by_type)),
        target_type_(std::move(target_type)),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    validate();
  }

  const std::map<std::string, std::vector<std::string>>& node_ids_by_type() const {
    return node_ids_by_type_;
  }
  const std::map<std::string, EdgeTypeData>& edges_by_type() const { return edges_by_type_; }
  const std::string& target_type() const { return target_type_; }
  const Tensor& features() const { return features_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }

  int type_count(const std::string& type) const {
    auto it = node_ids_by_type_.find(type);
    return it == node_ids_by_type_.end() ? 0 : static_cast<int>(it->second.size());
  }

  int target_count() const { return type_count(target_type_); }
  int feature_dim() const { return features_.cols; }

  int num_classes() const {
    if (!labels_) throw std::logic_error("HeteroGraph: no labels loaded");
    return *std::max_element(labels_->begin(), labels_->end()) + 1;
  }

 private:
  void validate() const {
    if (node_ids_by_type_.find(target_type_) == node_ids_by_type_.end())
      throw std::invalid_argument("HeteroGraph: target type '" + target_type_ + "' has no nodes");
    for (const auto& [etype, data] : edges_by_type_) {
      const int src_n = type_count(data.src_type);
      const int dst_n = type_count(data.dst_type);
      if (src_n == 0 || dst_n == 0)
        throw std::invalid_argument("HeteroGraph: edge type '" + etype +
                                    "' references unknown node type");
      for (const auto& [s, d] : data.edges) {
        if (s < 0 || s >= src_n || d < 0 || d >= dst_n)
          throw std::invalid_argument("HeteroGraph: edge of type '" + etype +
                                      "' has endpoint index out of range");
      }
    }
    const int n = target_count();
    if (features_.rows != n)
      throw std::invalid_argument("HeteroGraph: feature matrix has " +
                                  std::to_string(features_.rows) + " rows, expected " +
                                  std::to_string(n));
    if (labels_ && static_cast<int>(labels_->size()) != n)
      throw std::invalid_argument("HeteroGraph: label count does not match target nodes");
    // Definition of heterogeneity: |node types| + |edge types| > 2.
    if (node_ids_by_type_.size() + edges_by_type_.size() <= 2)
      throw std::invalid_argument("HeteroGraph: |node types| + |edge types| must exceed 2");
  }

  std::map<std::string, std::vector<std::string>> node_ids_by_type_;
  std::map<std::string, EdgeTypeData> edges_by_type_;
  std::string target_type_;
  Tensor features_;
  std::optional<std::vector<int>> labels_;
};

namespace detail {

[[noreturn]] inline void file_error(const std::string& file, long line, const std::string& msg) {
  throw std::runtime_error(file + ":" + std::to_string(line) + ": " + msg);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

// Iterates data lines of a TSV file; '#'-prefixed and blank lines are
// skipped but still advance the reported line number.
template <typename Fn>
inline void for_each_tsv_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    fn(line_no, line);
  }
}

inline double parse_double_field(const std::string& file, long line, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) file_error(file, line, "non-numeric entry '" + field + "'");
    return v;
  } catch (const std::invalid_argument&) {
    file_error(file, line, "non-numeric entry '" + field + "'");
  } catch (const std::out_of_range&) {
    file_error(file, line, "numeric entry out of range '" + field + "'");
  }
}

inline int parse_int_field(const std::string& file, long line, const std::string& field) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(field, &used);
    if (used != field.size()) file_error(file, line, "non-integer entry '" + field + "'");
    return v;
  } catch (const std::invalid_argument&) {
    file_error(file, line, "non-integer entry '" + field + "'");
  } catch (const std::out_of_range&) {
    file_error(file, line, "integer entry out of range '" + field + "'");
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Loads a graph from the TSV quadruple. Node indices follow file order;
// feature row i belongs to the i-th target-type node.
inline HeteroGraph load_graph(const std::string& node_file, const std::string& edge_file,
                              const std::string& feature_file,
                              const std::optional<std::string>& label_file,
                              const std::string& target_type) {
  std::map<std::string, std::vector<std::string>> ids_by_type;
  std::unordered_map<std::string, std::pair<std::string, int>> node_index;  // id -> (type, local)
  detail::for_each_tsv_line(node_file, [&](long line, const std::string& text) {
    const auto fields = detail::split_tabs(text);
    if (fields.size() != 2)
      detail::file_error(node_file, line, "expected 'node_id<TAB>node_type'");
    const auto& [id, type] = std::tie(fields[0], fields[1]);
    if (node_index.count(id))
      detail::file_error(node_file, line, "duplicate node id '" + id + "'");
    auto& ids = ids_by_type[type];
    node_index.emplace(id, std::make_pair(type, static_cast<int>(ids.size())));
    ids.push_back(id);
  });

  std::map<std::string, EdgeTypeData> edges_by_type;
  detail::for_each_tsv_line(edge_file, [&](long line, const std::string& text) {
    const auto fields = detail::split_tabs(text);
    if (fields.size() != 3)
      detail::file_error(edge_file, line, "expected 'edge_type<TAB>src_id<TAB>dst_id'");
    const auto src = node_index.find(fields[1]);
    if (src == node_index.end())
      detail::file_error(edge_file, line, "edge references unknown node id '" + fields[1] + "'");
    const auto dst = node_index.find(fields[2]);
    if (dst == node_index.end())
      detail::file_error(edge_file, line, "edge references unknown node id '" + fields[2] + "'");
    auto [it, fresh] = edges_by_type.try_emplace(fields[0]);
    EdgeTypeData& data = it->second;
    if (fresh) {
      data.src_type = src->second.first;
      data.dst_type = dst->second.first;
    } else if (data.src_type != src->second.first || data.dst_type != dst->second.first) {
      detail::file_error(edge_file, line,
                         "edge type '" + fields[0] + "' mixes endpoint node types");
    }
    data.edges.emplace_back(src->second.second, dst->second.second);
  });

  auto target_it = ids_by_type.find(target_type);
  if (target_it == ids_by_type.end())
    throw std::runtime_error(node_file + ": no nodes of target type '" + target_type + "'");
  const int n = static_cast<int>(target_it->second.size());

  std::vector<std::vector<double>> rows;
  detail::for_each_tsv_line(feature_file, [&](long line, const std::string& text) {
    const auto fields = detail::split_tabs(text);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(detail::parse_double_field(feature_file, line, f));
    if (!rows.empty() && rows.front().size() != row.size())
      detail::file_error(feature_file, line, "inconsistent feature dimension");
    rows.push_back(std::move(row));
  });
  if (static_cast<int>(rows.size()) != n)
    throw std::runtime_error(feature_file + ": feature row count " + std::to_string(rows.size()) +
                             " does not match " + std::to_string(n) + " target nodes");
  const int d = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  Tensor features(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) features.at(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  std::optional<std::vector<int>> labels;
  if (label_file) {
    std::vector<int> lab(static_cast<std::size_t>(n), -1);
    detail::for_each_tsv_line(*label_file, [&](long line, const std::string& text) {
      const auto fields = detail::split_tabs(text);
      if (fields.size() != 2)
        detail::file_error(*label_file, line, "expected 'node_id<TAB>integer_class'");
      const auto it = node_index.find(fields[0]);
      if (it == node_index.end() || it->second.first != target_type)
        detail::file_error(*label_file, line, "label for non-target node '" + fields[0] + "'");
      const int cls = detail::parse_int_field(*label_file, line, fields[1]);
      if (cls < 0) detail::file_error(*label_file, line, "negative class id");
      if (lab[static_cast<std::size_t>(it->second.second)] != -1)
        detail::file_error(*label_file, line, "duplicate label for node '" + fields[0] + "'");
      lab[static_cast<std::size_t>(it->second.second)] = cls;
    });
    for (int i = 0; i < n; ++i) {
      if (lab[static_cast<std::size_t>(i)] == -1)
        throw std::runtime_error(*label_file + ": missing label for node '" +
                                 target_it->second[static_cast<std::size_t>(i)] + "'");
    }
    labels = std::move(lab);
  }

  return HeteroGraph(std::move(ids_by_type), std::move(edges_by_type), target_type,
                     std::move(features), std::move(labels));
}

// Writes the canonical form: nodes sorted by (type, id), edges by
// (type, src_id, dst_id), features following the emitted target-node order,
// doubles at 17 significant digits.
inline void write_graph(const HeteroGraph& g, const std::string& node_file,
                        const std::string& edge_file, const std::string& feature_file,
                        const std::optional<std::string>& label_file) {
  auto open = [](const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    return out;
  };

  // canonical node order and the induced permutation of target rows
  std::map<std::string, std::vector<int>> order_by_type;
  for (const auto& [type, type_ids] : g.node_ids_by_type()) {
    const std::vector<std::string>& ids = type_ids;
    std::vector<int> order(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&ids](int a, int b) { return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)]; });
    order_by_type[type] = std::move(order);
  }

  {
    auto out = open(node_file);
    for (const auto& [type, ids] : g.node_ids_by_type())
      for (int i : order_by_type[type]) out << ids[static_cast<std::size_t>(i)] << '\t' << type << '\n';
  }
  {
    auto out = open(edge_file);
    for (const auto& [etype, data] : g.edges_by_type()) {
      const auto& src_ids = g.node_ids_by_type().at(data.src_type);
      const auto& dst_ids = g.node_ids_by_type().at(data.dst_type);
      std::vector<std::pair<std::string, std::string>> lines;
      lines.reserve(data.edges.size());
      for (const auto& [s, d] : data.edges)
        lines.emplace_back(src_ids[static_cast<std::size_t>(s)], dst_ids[static_cast<std::size_t>(d)]);
      std::sort(lines.begin(), lines.end());
      for (const auto& [s, d] : lines) out << etype << '\t' << s << '\t' << d << '\n';
    }
  }
  {
    auto out = open(feature_file);
    const auto& order = order_by_type[g.target_type()];
    for (int i : order) {
      for (int j = 0; j < g.features().cols; ++j) {
        if (j) out << '\t';
        out << detail::format_double(g.features().at(i, j));
      }
      out << '\n';
    }
  }
  if (label_file) {
    if (!g.labels()) throw std::logic_error("write_graph: graph has no labels");
    auto out = open(*label_file);
    const auto& ids = g.node_ids_by_type().at(g.target_type());
    for (int i : order_by_type[g.target_type()])
      out << ids[static_cast<std::size_t>(i)] << '\t' << (*g.labels())[static_cast<std::size_t>(i)] << '\n';
  }
}

// Meta-path based adjacency: entry (i, j) is 1 iff at least one path
// instance of the chain connects target nodes i != j. Built as the boolean
// product of per-step bipartite incidence matrices, then symmetrized with
// the diagonal zeroed.
inline SparseMatrix derive_metapath_adjacency(const HeteroGraph& g, const MetaPathSpec& spec) {
  spec.validate();
  std::string cur_type = g.target_type();
  SparseMatrix acc = SparseMatrix::identity(g.target_count());
  for (const auto& etype : spec.edge_type_chain) {
    auto it = g.edges_by_type().find(etype);
    if (it == g.edges_by_type().end())
      throw std::invalid_argument("meta-path '" + spec.name + "': unknown edge type '" + etype + "'");
    const EdgeTypeData& data = it->second;
    std::string next_type;
    std::vector<std::pair<int, int>> pairs;
    if (data.src_type == cur_type && data.dst_type == cur_type) {
      // same-type edges act undirected
      next_type = cur_type;
      pairs.reserve(data.edges.size() * 2);
      for (const auto& [s, d] : data.edges) {
        pairs.emplace_back(s, d);
        pairs.emplace_back(d, s);
      }
    } else if (data.src_type == cur_type) {
      next_type = data.dst_type;
      pairs = data.edges;
    } else if (data.dst_type == cur_type) {
      next_type = data.src_type;
      pairs.reserve(data.edges.size());
      for (const auto& [s, d] : data.edges) pairs.emplace_back(d, s);
    } else {
      throw std::invalid_argument("meta-path '" + spec.name + "': edge type '" + etype +
                                  "' does not connect node type '" + cur_type + "'");
    }
    SparseMatrix step = SparseMatrix::from_pairs(g.type_count(cur_type), g.type_count(next_type),
                                                 std::move(pairs));
    acc = bool_multiply(acc, step);
    cur_type = next_type;
  }
  if (cur_type != g.target_type())
    throw std::invalid_argument("meta-path '" + spec.name + "': chain ends at type '" + cur_type +
                                "', not target type '" + g.target_type() + "'");
  SparseMatrix result = drop_diagonal(symmetrize_binary(acc));
  result.validate();
  return result;
}

struct SynthOptions {
  int n_target = 100;
  int n_aux_per_type = 30;
  int n_classes = 3;
  double edge_density = 0.1;
  double noise = 0.0;  // cross-class edge probability = edge_density * noise
  int feature_dim = 8;
  std::uint64_t seed = 0;
  double second_aux_noise = -1.0;  // <0: same as noise (used to plant a pure-noise meta-path)
  double feature_scale = 1.0;      // magnitude of the class-mean vectors
};

// Planted-partition heterograph with target type "paper" and two
// class-affiliated auxiliary types "author" (edge type PA) and "subject"
// (edge type PS). Features are scaled class means plus unit Gaussian noise.
inline HeteroGraph synth_graph(const SynthOptions& opt) {
  if (opt.n_classes < 2) throw std::invalid_argument("synth_graph: n_classes must be >= 2");
  if (opt.n_target < opt.n_classes)
    throw std::invalid_argument("synth_graph: n_target must be >= n_classes");
  if (opt.n_aux_per_type < 1) throw std::invalid_argument("synth_graph: n_aux_per_type must be >= 1");
  if (opt.feature_dim < 1) throw std::invalid_argument("synth_graph: feature_dim must be >= 1");
  auto check_prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(std::string("synth_graph: ") + what + " must lie in [0,1]");
  };
  check_prob(opt.edge_density, "edge_density");
  check_prob(opt.noise, "noise");
  if (opt.second_aux_noise >= 0.0) check_prob(opt.second_aux_noise, "second_aux_noise");

  Rng rng(opt.seed);
  auto class_of = [&](int i, int total) {
    return static_cast<int>((static_cast<long>(i) * opt.n_classes) / total);
  };

  std::map<std::string, std::vector<std::string>> ids;
  auto make_ids = [](const char* prefix, int count) {
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) v.push_back(prefix + std::to_string(i));
    return v;
  };
  ids["paper"] = make_ids("p", opt.n_target);
  ids["author"] = make_ids("a", opt.n_aux_per_type);
  ids["subject"] = make_ids("s", opt.n_aux_per_type);

  auto gen_edges = [&](double cross_noise) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < opt.n_target; ++i) {
      const int ci = class_of(i, opt.n_target);
      for (int j = 0; j < opt.n_aux_per_type; ++j) {
        const int cj = class_of(j, opt.n_aux_per_type);
        const double p = ci == cj ? opt.edge_density : opt.edge_density * cross_noise;
        if (rng.bernoulli(p)) edges.emplace_back(i, j);
      }
    }
    return edges;
  };
  std::map<std::string, EdgeTypeData> edges;
  edges["PA"] = EdgeTypeData{"paper", "author", gen_edges(opt.noise)};
  const double noise2 = opt.second_aux_noise >= 0.0 ? opt.second_aux_noise : opt.noise;
  edges["PS"] = EdgeTypeData{"paper", "subject", gen_edges(noise2)};

  Tensor features(opt.n_target, opt.feature_dim);
  std::vector<int> labels(static_cast<std::size_t>(opt.n_target));
  for (int i = 0; i < opt.n_target; ++i) {
    const int c = class_of(i, opt.n_target);
    labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < opt.feature_dim; ++j) {
      const double mean = (j == c % opt.feature_dim) ? opt.feature_scale : 0.0;
      features.at(i, j) = mean + rng.gaussian();
    }
  }

  return HeteroGraph(std::move(ids), std::move(edges), "paper", std::move(features),
                     std::move(labels));
}

inline HeteroGraph synth_graph(int n_target, int n_aux_per_type, int n_classes,
                               double edge_density, double noise, int feature_dim,
                               std::uint64_t seed) {
  SynthOptions opt;
  opt.n_target = n_target;
  opt.n_aux_per_type = n_aux_per_type;
  opt.n_classes = n_classes;
  opt.edge_density = edge_density;
  opt.noise = noise;
  opt.feature_dim = feature_dim;
  opt.seed = seed;
  return synth_graph(opt);
}

}  // namespace hdgi
