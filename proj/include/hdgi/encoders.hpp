#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdgi/random.hpp"
#include "hdgi/sparse.hpp"
#include "hdgi/tape.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

// Symmetric renormalization D^{-1/2} (A + I) D^{-1/2} with D the degree
// diagonal of A + I. Input must be square, binary, zero-diagonal.
inline SparseMatrix normalize_adjacency(const SparseMatrix& a) {
  if (a.n_rows != a.n_cols)
    throw std::invalid_argument("normalize_adjacency: matrix not square");
  if (!is_binary(a))
    throw std::invalid_argument("normalize_adjacency: matrix not binary");
  if (!has_zero_diagonal(a))
    throw std::invalid_argument("normalize_adjacency: diagonal not zero");
  const int n = a.n_rows;
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto [b, e] = a.row_range(i);
    inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(static_cast<double>(e - b) + 1.0);
  }
  SparseMatrix out(n, n);
  out.col_idx.reserve(a.col_idx.size() + static_cast<std::size_t>(n));
  out.values.reserve(a.col_idx.size() + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto [b, e] = a.row_range(i);
    bool self_emitted = false;
    auto emit = [&](int j) {
      out.col_idx.push_back(j);
      out.values.push_back(inv_sqrt_deg[static_cast<std::size_t>(i)] * inv_sqrt_deg[static_cast<std::size_t>(j)]);
    };
    for (int k = b; k < e; ++k) {
      const int j = a.col_idx[static_cast<std::size_t>(k)];
      if (!self_emitted && j > i) {
        emit(i);
        self_emitted = true;
      }
      emit(j);
    }
    if (!self_emitted) emit(i);
    out.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(out.col_idx.size());
  }
  out.validate();
  return out;
}

enum class EncoderKind { kGcn, kGat };
enum class GatActivation { kElu, kPrelu };

// Per meta-path GCN parameters: layer 0 maps d -> F, deeper layers F -> F.
// Weights are not shared between meta-paths.
struct GcnEncoderParams {
  std::vector<TensorPtr> layer_weights;
  TensorPtr prelu_slope;  // 1x1
  bool use_prelu = true;
};

inline GcnEncoderParams make_gcn_params(int in_dim, int out_dim, int depth, bool use_prelu,
                                        Rng& rng) {
  if (depth < 1) throw std::invalid_argument("make_gcn_params: depth must be >= 1");
  GcnEncoderParams p;
  for (int l = 0; l < depth; ++l)
    p.layer_weights.push_back(make_parameter(glorot_uniform(l == 0 ? in_dim : out_dim, out_dim, rng)));
  p.prelu_slope = make_parameter(Tensor(1, 1, 0.25));
  p.use_prelu = use_prelu;
  return p;
}

// One layer: H = prelu(A_norm (X W)).
inline TensorPtr gcn_forward(const SparseMatrixPtr& a_norm, const TensorPtr& x,
                             const GcnEncoderParams& params, Tape& tape) {
  if (!a_norm || a_norm->n_cols != x->rows)
    throw std::invalid_argument("gcn_forward: adjacency/feature shape mismatch");
  TensorPtr h = x;
  for (const auto& w : params.layer_weights) {
    h = sparse_matmul(a_norm, matmul(h, w, tape), tape);
    if (params.use_prelu) h = prelu(h, params.prelu_slope, tape);
  }
  return h;
}

// Per meta-path GAT parameters. Each layer holds K head weights
// (in_dim x F/K) and K attention vectors (2(F/K) x 1; first half scores the
// source node, second half the neighbor).
struct GatLayerParams {
  std::vector<TensorPtr> head_weights;
  std::vector<TensorPtr> head_attn;
};

struct GatEncoderParams {
  std::vector<GatLayerParams> layers;
  double leaky_slope = 0.2;
  GatActivation activation = GatActivation::kElu;
  TensorPtr prelu_slope;  // used when activation == kPrelu
};

inline GatEncoderParams make_gat_params(int in_dim, int out_dim, int heads, int depth,
                                        GatActivation activation, Rng& rng) {
  if (heads < 1) throw std::invalid_argument("make_gat_params: head count must be >= 1");
  if (out_dim % heads != 0)
    throw std::invalid_argument("make_gat_params: head count " + std::to_string(heads) +
                                " does not divide representation width " + std::to_string(out_dim));
  if (depth < 1) throw std::invalid_argument("make_gat_params: depth must be >= 1");
  const int q = out_dim / heads;
  GatEncoderParams p;
  p.activation = activation;
  for (int l = 0; l < depth; ++l) {
    GatLayerParams layer;
    const int width = l == 0 ? in_dim : out_dim;
    for (int k = 0; k < heads; ++k) {
      layer.head_weights.push_back(make_parameter(glorot_uniform(width, q, rng)));
      layer.head_attn.push_back(make_parameter(glorot_uniform(2 * q, 1, rng)));
    }
    p.layers.push_back(std::move(layer));
  }
  p.prelu_slope = make_parameter(Tensor(1, 1, 0.25));
  return p;
}

// Dense self-inclusive neighborhood mask A + I used by the masked softmax.
inline TensorPtr gat_attention_mask(const SparseMatrix& a) {
  auto mask = make_tensor(a.n_rows, a.n_cols);
  for (int i = 0; i < a.n_rows; ++i) {
    mask->at(i, i) = 1.0;
    auto [b, e] = a.row_range(i);
    for (int k = b; k < e; ++k) mask->at(i, a.col_idx[static_cast<std::size_t>(k)]) = 1.0;
  }
  return mask;
}

// Multi-head attention layer stack. Coefficients are a masked softmax of
// leaky_relu(a_src . z_m + a_dst . z_j) over the self-inclusive
// neighborhood; head outputs pass through the activation and concatenate.
inline TensorPtr gat_forward(const SparseMatrixPtr& a, const TensorPtr& x,
                             const GatEncoderParams& params, Tape& tape) {
  if (!a || a->n_rows != x->rows)
    throw std::invalid_argument("gat_forward: adjacency/feature shape mismatch");
  const int n = x->rows;
  TensorPtr mask = gat_attention_mask(*a);
  auto ones_row = make_tensor(1, n, 1.0);
  auto ones_col = make_tensor(n, 1, 1.0);

  TensorPtr h = x;
  for (const auto& layer : params.layers) {
    std::vector<TensorPtr> head_outputs;
    head_outputs.reserve(layer.head_weights.size());
    for (std::size_t k = 0; k < layer.head_weights.size(); ++k) {
      const TensorPtr& w = layer.head_weights[k];
      const TensorPtr& attn = layer.head_attn[k];
      const int q = w->cols;
      if (attn->rows != 2 * q || attn->cols != 1)
        throw std::invalid_argument("gat_forward: attention vector length must be 2(F/K)");
      TensorPtr z = matmul(h, w, tape);
      std::vector<int> src_half(static_cast<std::size_t>(q)), dst_half(static_cast<std::size_t>(q));
      for (int i = 0; i < q; ++i) {
        src_half[static_cast<std::size_t>(i)] = i;
        dst_half[static_cast<std::size_t>(i)] = q + i;
      }
      TensorPtr f_src = matmul(z, row_select(attn, src_half, tape), tape);  // n x 1
      TensorPtr f_dst = matmul(z, row_select(attn, dst_half, tape), tape);  // n x 1
      TensorPtr logits = add(matmul(f_src, ones_row, tape),
                             matmul(ones_col, transpose(f_dst, tape), tape), tape);
      logits = leaky_relu(logits, params.leaky_slope, tape);
      TensorPtr alpha = softmax_over_mask(logits, mask, tape);
      TensorPtr aggregated = matmul(alpha, z, tape);
      head_outputs.push_back(params.activation == GatActivation::kElu
                                 ? elu(aggregated, tape)
                                 : prelu(aggregated, params.prelu_slope, tape));
    }
    h = head_outputs.size() == 1 ? head_outputs.front() : concat_cols(head_outputs, tape);
  }
  return h;
}

// All learnable tensors of the per-meta-path encoders, in a stable order.
struct EncoderParams {
  EncoderKind kind = EncoderKind::kGcn;
  std::vector<GcnEncoderParams> gcn;  // one per meta-path
  std::vector<GatEncoderParams> gat;  // one per meta-path

  std::size_t metapath_count() const {
    return kind == EncoderKind::kGcn ? gcn.size() : gat.size();
  }

  std::vector<TensorPtr> trainable() const {
    std::vector<TensorPtr> out;
    if (kind == EncoderKind::kGcn) {
      for (const auto& p : gcn) {
        for (const auto& w : p.layer_weights) out.push_back(w);
        if (p.use_prelu) out.push_back(p.prelu_slope);
      }
    } else {
      for (const auto& p : gat) {
        for (const auto& layer : p.layers) {
          for (const auto& w : layer.head_weights) out.push_back(w);
          for (const auto& v : layer.head_attn) out.push_back(v);
        }
        if (p.activation == GatActivation::kPrelu) out.push_back(p.prelu_slope);
      }
    }
    return out;
  }
};

// Per meta-path constants shared by every epoch: the raw adjacency and the
// encoder-specific derived form.
struct MetaPathInputs {
  SparseMatrixPtr adjacency;   // binary, zero diagonal
  SparseMatrixPtr normalized;  // GCN branch
};

inline std::vector<MetaPathInputs> prepare_metapath_inputs(
    const std::vector<SparseMatrixPtr>& adjacencies, EncoderKind kind) {
  std::vector<MetaPathInputs> out;
  out.reserve(adjacencies.size());
  for (const auto& a : adjacencies) {
    MetaPathInputs in;
    in.adjacency = a;
    if (kind == EncoderKind::kGcn)
      in.normalized = std::make_shared<const SparseMatrix>(normalize_adjacency(*a));
    out.push_back(std::move(in));
  }
  return out;
}

// Runs the meta-path specific encoder for every meta-path with its own
// parameters; returns {H_phi}, each N x F.
inline std::vector<TensorPtr> encode_all(const TensorPtr& x,
                                         const std::vector<MetaPathInputs>& inputs,
                                         const EncoderParams& params, Tape& tape) {
  if (inputs.size() != params.metapath_count())
    throw std::invalid_argument("encode_all: need one adjacency per meta-path (got " +
                                std::to_string(inputs.size()) + " adjacencies, " +
                                std::to_string(params.metapath_count()) + " parameter sets)");
  std::vector<TensorPtr> hs;
  hs.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    hs.push_back(params.kind == EncoderKind::kGcn
                     ? gcn_forward(inputs[i].normalized, x, params.gcn[i], tape)
                     : gat_forward(inputs[i].adjacency, x, params.gat[i], tape));
  }
  return hs;
}

}  // namespace hdgi
