#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hdgi/random.hpp"
#include "hdgi/tape.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

// Semantic-level attention: W_sem maps representations F -> q_dim, b is the
// bias inside the tanh, q is the shared attention vector.
struct SemanticAttentionParams {
  TensorPtr w_sem;  // F x q_dim
  TensorPtr bias;   // 1 x q_dim
  TensorPtr q;      // q_dim x 1

  std::vector<TensorPtr> trainable() const { return {w_sem, bias, q}; }
};

inline SemanticAttentionParams make_semattn_params(int rep_dim, int q_dim, Rng& rng) {
  SemanticAttentionParams p;
  p.w_sem = make_parameter(glorot_uniform(rep_dim, q_dim, rng));
  p.bias = make_parameter(Tensor(1, q_dim));
  p.q = make_parameter(glorot_uniform(q_dim, 1, rng));
  return p;
}

// Importance of one meta-path: mean over nodes of tanh(q . (W_sem h_n + b)).
// Returns one 1x1 tensor per meta-path.
inline std::vector<TensorPtr> metapath_importance(const std::vector<TensorPtr>& h_list,
                                                  const SemanticAttentionParams& params,
                                                  Tape& tape) {
  if (h_list.empty()) throw std::invalid_argument("metapath_importance: empty list");
  for (const auto& h : h_list) {
    if (!h->same_shape(*h_list.front()))
      throw std::invalid_argument("metapath_importance: representations differ in shape (" +
                                  h->shape_str() + " vs " + h_list.front()->shape_str() + ")");
  }
  std::vector<TensorPtr> importances;
  importances.reserve(h_list.size());
  for (const auto& h : h_list) {
    TensorPtr projected = add_row_bias(matmul(h, params.w_sem, tape), params.bias, tape);
    TensorPtr scored = tanh(matmul(projected, params.q, tape), tape);
    importances.push_back(mean_rows(scored, tape));
  }
  return importances;
}

// Softmax over the importance scalars; the returned 1xP tensor sums to 1.
inline TensorPtr attention_weights(const std::vector<TensorPtr>& importances, Tape& tape) {
  if (importances.empty()) throw std::invalid_argument("attention_weights: empty list");
  for (const auto& e : importances)
    if (!e->is_scalar())
      throw std::invalid_argument("attention_weights: importances must be scalars");
  TensorPtr row = importances.size() == 1 ? importances.front() : concat_cols(importances, tape);
  auto mask = make_tensor(1, static_cast<int>(importances.size()), 1.0);
  return softmax_over_mask(row, mask, tape);
}

// H = sum_i beta_i H_phi_i. beta is the 1xP output of attention_weights.
inline TensorPtr fuse(const std::vector<TensorPtr>& h_list, const TensorPtr& beta, Tape& tape) {
  if (h_list.empty()) throw std::invalid_argument("fuse: empty list");
  if (beta->rows != 1 || beta->cols != static_cast<int>(h_list.size()))
    throw std::invalid_argument("fuse: got " + std::to_string(h_list.size()) +
                                " representations but " + std::to_string(beta->cols) + " weights");
  TensorPtr beta_col = transpose(beta, tape);
  TensorPtr fused;
  for (std::size_t i = 0; i < h_list.size(); ++i) {
    TensorPtr beta_i = row_select(beta_col, {static_cast<int>(i)}, tape);
    TensorPtr term = scalar_scale(h_list[i], beta_i, tape);
    fused = fused ? add(fused, term, tape) : term;
  }
  return fused;
}

}  // namespace hdgi
