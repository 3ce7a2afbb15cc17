#pragma once

// Test-only oracles: straightforward dense / enumeration implementations
// kept independent of the CSR and tape code paths they check.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hdgi/hetgraph.hpp"
#include "hdgi/random.hpp"
#include "hdgi/sparse.hpp"
#include "hdgi/tensor.hpp"

namespace testutil {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(int r, int c) { return Mat(static_cast<std::size_t>(r), std::vector<double>(static_cast<std::size_t>(c), 0.0)); }

inline Mat from_tensor(const hdgi::Tensor& t) {
  Mat m = zeros(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = t.at(i, j);
  return m;
}

inline Mat from_sparse(const hdgi::SparseMatrix& s) {
  Mat m = zeros(s.n_rows, s.n_cols);
  for (int i = 0; i < s.n_rows; ++i) {
    auto [b, e] = s.row_range(i);
    for (int k = b; k < e; ++k)
      m[static_cast<std::size_t>(i)][static_cast<std::size_t>(s.col_idx[static_cast<std::size_t>(k)])] =
          s.values[static_cast<std::size_t>(k)];
  }
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c = zeros(static_cast<int>(a.size()), static_cast<int>(b[0].size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::fabs(a[i][j] - b[i][j]));
  return d;
}

// D^{-1/2} (A+I) D^{-1/2} on a dense binary zero-diagonal matrix.
inline Mat normalize_dense(Mat a) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
  Mat out = zeros(static_cast<int>(n), static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a[i][j] != 0.0) out[i][j] = a[i][j] / std::sqrt(deg[i] * deg[j]);
  return out;
}

// GCN layer the slow way: prelu(normalize(A) X W).
inline Mat gcn_oracle(const Mat& adjacency, const Mat& x, const Mat& w, double prelu_slope,
                      bool use_prelu) {
  Mat h = matmul(matmul(normalize_dense(adjacency), x), w);
  if (use_prelu)
    for (auto& row : h)
      for (auto& v : row)
        if (v < 0.0) v *= prelu_slope;
  return h;
}

// One GAT layer as an explicit per-edge loop over the self-inclusive
// neighborhood, heads concatenated, ELU output.
inline Mat gat_oracle(const Mat& adjacency, const Mat& x,
                      const std::vector<Mat>& head_weights,   // K of (d x q)
                      const std::vector<std::vector<double>>& head_attn,  // K of length 2q
                      double leaky_slope) {
  const std::size_t n = x.size();
  const std::size_t heads = head_weights.size();
  const std::size_t q = head_weights[0][0].size();
  Mat out = zeros(static_cast<int>(n), static_cast<int>(heads * q));
  for (std::size_t k = 0; k < heads; ++k) {
    Mat z = matmul(x, head_weights[k]);
    for (std::size_t m = 0; m < n; ++m) {
      std::vector<std::size_t> nbrs;
      for (std::size_t j = 0; j < n; ++j)
        if (j == m || adjacency[m][j] != 0.0) nbrs.push_back(j);
      std::vector<double> logits;
      for (std::size_t j : nbrs) {
        double e = 0.0;
        for (std::size_t c = 0; c < q; ++c)
          e += head_attn[k][c] * z[m][c] + head_attn[k][q + c] * z[j][c];
        logits.push_back(e >= 0.0 ? e : leaky_slope * e);
      }
      double maxv = logits[0];
      for (double v : logits) maxv = std::max(maxv, v);
      double denom = 0.0;
      for (double v : logits) denom += std::exp(v - maxv);
      for (std::size_t c = 0; c < q; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < nbrs.size(); ++t)
          acc += std::exp(logits[t] - maxv) / denom * z[nbrs[t]][c];
        out[m][k * q + c] = acc >= 0.0 ? acc : std::expm1(acc);
      }
    }
  }
  return out;
}

// All ordered target pairs (i, j), i != j, linked by a walk following the
// chain. Depth-limited DFS; node revisits along the walk are allowed, which
// matches the product-of-incidence-matrices semantics.
inline std::set<std::pair<int, int>> enumerate_metapath_pairs(const hdgi::HeteroGraph& g,
                                                              const hdgi::MetaPathSpec& spec) {
  struct Step {
    std::vector<std::vector<int>> next;  // adjacency oriented for this step
  };
  std::vector<Step> steps;
  std::string cur_type = g.target_type();
  for (const auto& etype : spec.edge_type_chain) {
    const auto& data = g.edges_by_type().at(etype);
    Step step;
    step.next.resize(static_cast<std::size_t>(g.type_count(cur_type)));
    if (data.src_type == cur_type && data.dst_type == cur_type) {
      for (auto [s, d] : data.edges) {
        step.next[static_cast<std::size_t>(s)].push_back(d);
        step.next[static_cast<std::size_t>(d)].push_back(s);
      }
      // cur_type unchanged
    } else if (data.src_type == cur_type) {
      for (auto [s, d] : data.edges) step.next[static_cast<std::size_t>(s)].push_back(d);
      cur_type = data.dst_type;
    } else {
      for (auto [s, d] : data.edges) step.next[static_cast<std::size_t>(d)].push_back(s);
      cur_type = data.src_type;
    }
    steps.push_back(std::move(step));
  }

  std::set<std::pair<int, int>> pairs;
  const int n = g.target_count();
  for (int start = 0; start < n; ++start) {
    std::vector<int> frontier{start};
    for (const auto& step : steps) {
      std::set<int> reached;
      for (int u : frontier)
        for (int v : step.next[static_cast<std::size_t>(u)]) reached.insert(v);
      frontier.assign(reached.begin(), reached.end());
    }
    for (int end : frontier)
      if (end != start) pairs.emplace(start, end);
  }
  return pairs;
}

// Random small heterograph with three node types and two bipartite edge
// types E1 (T0-T1) and E2 (T1-T2); T0 is the target type.
inline hdgi::HeteroGraph random_heterograph(hdgi::Rng& rng, int max_total_nodes = 12) {
  int n0 = 2 + rng.uniform_int(4);
  int n1 = 1 + rng.uniform_int(4);
  int n2 = 1 + rng.uniform_int(3);
  while (n0 + n1 + n2 > max_total_nodes) {
    if (n0 > 2) --n0;
    if (n1 > 1 && n0 + n1 + n2 > max_total_nodes) --n1;
    if (n2 > 1 && n0 + n1 + n2 > max_total_nodes) --n2;
  }
  const double p1 = 0.15 + 0.5 * rng.uniform();
  const double p2 = 0.15 + 0.5 * rng.uniform();
  std::map<std::string, std::vector<std::string>> ids;
  auto name_nodes = [](const char* p, int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back(p + std::to_string(i));
    return v;
  };
  ids["t0"] = name_nodes("x", n0);
  ids["t1"] = name_nodes("y", n1);
  ids["t2"] = name_nodes("z", n2);
  std::map<std::string, hdgi::EdgeTypeData> edges;
  hdgi::EdgeTypeData e1{"t0", "t1", {}};
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j)
      if (rng.bernoulli(p1)) e1.edges.emplace_back(i, j);
  hdgi::EdgeTypeData e2{"t1", "t2", {}};
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      if (rng.bernoulli(p2)) e2.edges.emplace_back(i, j);
  edges["E1"] = std::move(e1);
  edges["E2"] = std::move(e2);
  hdgi::Tensor features(n0, 3);
  for (auto& v : features.data) v = rng.gaussian();
  return hdgi::HeteroGraph(std::move(ids), std::move(edges), "t0", std::move(features));
}

// Relabels target nodes by perm (new index of old node i is perm[i]) and
// permutes features/labels/edge endpoints to match.
inline hdgi::HeteroGraph permute_target_nodes(const hdgi::HeteroGraph& g,
                                              const std::vector<int>& perm) {
  auto ids = g.node_ids_by_type();
  const auto& old_ids = ids.at(g.target_type());
  std::vector<std::string> new_ids(old_ids.size());
  for (std::size_t i = 0; i < old_ids.size(); ++i)
    new_ids[static_cast<std::size_t>(perm[i])] = old_ids[i];
  ids[g.target_type()] = std::move(new_ids);

  auto edges = g.edges_by_type();
  for (auto& [etype, data] : edges) {
    for (auto& [s, d] : data.edges) {
      if (data.src_type == g.target_type()) s = perm[static_cast<std::size_t>(s)];
      if (data.dst_type == g.target_type()) d = perm[static_cast<std::size_t>(d)];
    }
  }

  hdgi::Tensor features(g.features().rows, g.features().cols);
  for (int i = 0; i < features.rows; ++i)
    for (int c = 0; c < features.cols; ++c)
      features.at(perm[static_cast<std::size_t>(i)], c) = g.features().at(i, c);

  std::optional<std::vector<int>> labels;
  if (g.labels()) {
    std::vector<int> lab(g.labels()->size());
    for (std::size_t i = 0; i < lab.size(); ++i)
      lab[static_cast<std::size_t>(perm[i])] = (*g.labels())[i];
    labels = std::move(lab);
  }
  return hdgi::HeteroGraph(std::move(ids), std::move(edges), g.target_type(), std::move(features),
                           std::move(labels));
}

inline hdgi::TensorPtr random_tensor(int r, int c, hdgi::Rng& rng, bool requires_grad) {
  hdgi::Tensor t(r, c);
  for (auto& v : t.data) v = rng.gaussian();
  return requires_grad ? hdgi::make_parameter(std::move(t)) : hdgi::make_constant(std::move(t));
}

}  // namespace testutil
