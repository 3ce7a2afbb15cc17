#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hdgi/adam.hpp"
#include "hdgi/encoders.hpp"
#include "hdgi/gradcheck.hpp"
#include "hdgi/hetgraph.hpp"
#include "hdgi/random.hpp"
#include "hdgi/semattn.hpp"
#include "hdgi/tape.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

enum class ReadoutKind { kMean, kPool };

struct PoolReadoutParams {
  TensorPtr weight;  // F x F
  TensorPtr bias;    // 1 x F
};

struct ReadoutParams {
  ReadoutKind kind = ReadoutKind::kMean;
  TensorPtr prelu_slope;  // sigma for both readout kinds
  PoolReadoutParams pool;

  std::vector<TensorPtr> trainable() const {
    if (kind == ReadoutKind::kMean) return {prelu_slope};
    return {pool.weight, pool.bias, prelu_slope};
  }
};

// Bilinear discriminator weight, square in the representation width.
struct DiscriminatorParams {
  TensorPtr weight;  // F x F
};

// Graph-level summary: prelu of the column means of H.
inline TensorPtr readout_mean(const TensorPtr& h, const TensorPtr& prelu_slope, Tape& tape) {
  if (h->rows < 1) throw std::invalid_argument("readout_mean: empty matrix");
  return prelu(mean_rows(h, tape), prelu_slope, tape);
}

// Graph-level summary: columnwise max over prelu(h W_pool + b).
inline TensorPtr readout_pool(const TensorPtr& h, const PoolReadoutParams& params,
                              const TensorPtr& prelu_slope, Tape& tape) {
  if (h->rows < 1) throw std::invalid_argument("readout_pool: empty matrix");
  TensorPtr transformed =
      prelu(add_row_bias(matmul(h, params.weight, tape), params.bias, tape), prelu_slope, tape);
  return max_rows(transformed, tape);
}

inline TensorPtr apply_readout(const TensorPtr& h, const ReadoutParams& params, Tape& tape) {
  return params.kind == ReadoutKind::kMean
             ? readout_mean(h, params.prelu_slope, tape)
             : readout_pool(h, params.pool, params.prelu_slope, tape);
}

// Negative-sample generator output: features with shuffled rows plus the
// permutation that produced them. Adjacency matrices are never touched.
struct CorruptionOutput {
  TensorPtr x_tilde;
  std::vector<int> permutation;
};

// Uniform random non-identity row permutation of the feature matrix.
inline CorruptionOutput corrupt(const Tensor& x, Rng& rng) {
  const int n = x.rows;
  if (n < 2) throw std::invalid_argument("corrupt: need at least 2 rows");
  std::vector<int> perm;
  bool identity = true;
  do {
    perm = rng.permutation(n);
    identity = true;
    for (int i = 0; i < n && identity; ++i) identity = perm[static_cast<std::size_t>(i)] == i;
  } while (identity);
  auto shuffled = make_tensor(n, x.cols);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < x.cols; ++c)
      shuffled->at(i, c) = x.at(perm[static_cast<std::size_t>(i)], c);
  return CorruptionOutput{std::move(shuffled), std::move(perm)};
}

// Pre-sigmoid scores h_i^T W_D s for every row of h; s is the 1xF summary.
inline TensorPtr discriminator_logits(const TensorPtr& h, const DiscriminatorParams& params,
                                      const TensorPtr& summary_row, Tape& tape) {
  return bilinear_form(h, params.weight, transpose(summary_row, tape), tape);
}

// Probability that (h_row, s) comes from the real graph: sigmoid(h W_D s).
inline TensorPtr discriminate(const TensorPtr& h_row, const TensorPtr& summary_row,
                              const DiscriminatorParams& params, Tape& tape) {
  if (h_row->rows != 1 || summary_row->rows != 1 || h_row->cols != summary_row->cols)
    throw std::invalid_argument("discriminate: inputs must be 1xF vectors of equal length");
  return sigmoid(discriminator_logits(h_row, params, summary_row, tape), tape);
}

// Binary cross-entropy of the discriminator over pre-sigmoid logits:
// -(sum log sigmoid(pos) + sum log sigmoid(-neg)) / (N + M). Evaluating the
// negative branch as sigmoid of the negated logit keeps log(1 - p) stable.
inline TensorPtr bce_loss(const TensorPtr& pos_logits, const TensorPtr& neg_logits, Tape& tape) {
  if (pos_logits->size() == 0 || neg_logits->size() == 0)
    throw std::invalid_argument("bce_loss: empty score set");
  TensorPtr pos_term = sum_all(log(sigmoid(pos_logits, tape), tape), tape);
  TensorPtr neg_term =
      sum_all(log(sigmoid(scalar_scale(neg_logits, -1.0, tape), tape), tape), tape);
  const double inv = -1.0 / static_cast<double>(pos_logits->size() + neg_logits->size());
  return scalar_scale(add(pos_term, neg_term, tape), inv, tape);
}

struct ModelShape {
  EncoderKind encoder = EncoderKind::kGcn;
  ReadoutKind readout = ReadoutKind::kMean;
  int metapaths = 1;
  int feature_dim = 0;
  int rep_dim = 512;  // F
  int q_dim = 8;
  int heads = 4;  // K, GAT only
  int depth = 1;
  bool gcn_prelu = true;
  GatActivation gat_activation = GatActivation::kElu;
};

// Every learnable tensor of the model, grouped by role. trainable() yields a
// stable order: encoders, semantic attention, readout, discriminator.
struct ModelParams {
  ModelShape shape;
  EncoderParams encoder;
  SemanticAttentionParams semattn;
  ReadoutParams readout;
  DiscriminatorParams discriminator;

  std::vector<TensorPtr> trainable() const {
    std::vector<TensorPtr> out = encoder.trainable();
    for (const auto& t : semattn.trainable()) out.push_back(t);
    for (const auto& t : readout.trainable()) out.push_back(t);
    out.push_back(discriminator.weight);
    return out;
  }

  // Stable names for checkpoints; parallel to trainable().
  std::vector<std::pair<std::string, TensorPtr>> named_tensors() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    if (encoder.kind == EncoderKind::kGcn) {
      for (std::size_t i = 0; i < encoder.gcn.size(); ++i) {
        const auto& p = encoder.gcn[i];
        for (std::size_t l = 0; l < p.layer_weights.size(); ++l)
          out.emplace_back("enc" + std::to_string(i) + ".layer" + std::to_string(l) + ".weight",
                           p.layer_weights[l]);
        if (p.use_prelu)
          out.emplace_back("enc" + std::to_string(i) + ".prelu", p.prelu_slope);
      }
    } else {
      for (std::size_t i = 0; i < encoder.gat.size(); ++i) {
        const auto& p = encoder.gat[i];
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
          for (std::size_t k = 0; k < p.layers[l].head_weights.size(); ++k) {
            const std::string base =
                "enc" + std::to_string(i) + ".layer" + std::to_string(l) + ".head" + std::to_string(k);
            out.emplace_back(base + ".weight", p.layers[l].head_weights[k]);
            out.emplace_back(base + ".attn", p.layers[l].head_attn[k]);
          }
        }
        if (p.activation == GatActivation::kPrelu)
          out.emplace_back("enc" + std::to_string(i) + ".prelu", p.prelu_slope);
      }
    }
    out.emplace_back("sem.w", semattn.w_sem);
    out.emplace_back("sem.b", semattn.bias);
    out.emplace_back("sem.q", semattn.q);
    if (readout.kind == ReadoutKind::kPool) {
      out.emplace_back("readout.pool.weight", readout.pool.weight);
      out.emplace_back("readout.pool.bias", readout.pool.bias);
    }
    out.emplace_back("readout.prelu", readout.prelu_slope);
    out.emplace_back("disc.weight", discriminator.weight);
    return out;
  }
};

// Fresh parameters: Glorot weights, prelu slopes 0.25, zero bias, and a zero
// discriminator so the first loss sits exactly at ln 2.
inline ModelParams init_model_params(const ModelShape& shape, Rng& rng) {
  if (shape.feature_dim < 1) throw std::invalid_argument("init_model_params: feature_dim unset");
  if (shape.metapaths < 1) throw std::invalid_argument("init_model_params: need >= 1 meta-path");
  ModelParams params;
  params.shape = shape;
  params.encoder.kind = shape.encoder;
  for (int i = 0; i < shape.metapaths; ++i) {
    if (shape.encoder == EncoderKind::kGcn) {
      params.encoder.gcn.push_back(
          make_gcn_params(shape.feature_dim, shape.rep_dim, shape.depth, shape.gcn_prelu, rng));
    } else {
      params.encoder.gat.push_back(make_gat_params(shape.feature_dim, shape.rep_dim, shape.heads,
                                                   shape.depth, shape.gat_activation, rng));
    }
  }
  params.semattn = make_semattn_params(shape.rep_dim, shape.q_dim, rng);
  params.readout.kind = shape.readout;
  params.readout.prelu_slope = make_parameter(Tensor(1, 1, 0.25));
  if (shape.readout == ReadoutKind::kPool) {
    params.readout.pool.weight = make_parameter(glorot_uniform(shape.rep_dim, shape.rep_dim, rng));
    params.readout.pool.bias = make_parameter(Tensor(1, shape.rep_dim));
  }
  params.discriminator.weight = make_parameter(Tensor(shape.rep_dim, shape.rep_dim));
  return params;
}

inline std::vector<Tensor> snapshot_values(const ModelParams& params) {
  std::vector<Tensor> out;
  for (const auto& t : params.trainable()) out.push_back(*t);
  return out;
}

inline void restore_values(ModelParams& params, const std::vector<Tensor>& snapshot) {
  auto tensors = params.trainable();
  if (tensors.size() != snapshot.size())
    throw std::logic_error("restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i]->data = snapshot[i].data;
}

struct TrainConfig {
  EncoderKind encoder = EncoderKind::kGcn;
  ReadoutKind readout = ReadoutKind::kMean;
  int epochs = 2000;
  int patience = 20;
  double learning_rate = -1.0;  // < 0: 1e-3 for HDGI-C, 5e-3 for HDGI-A
  std::uint64_t seed = 0;
  int rep_dim = -1;  // F; < 0: 512 for HDGI-C, 64 for HDGI-A
  int q_dim = 8;
  int heads = 4;
  double input_dropout = 0.0;
  int depth = 1;
  bool gcn_prelu = true;
  GatActivation gat_activation = GatActivation::kElu;
  bool per_branch_beta = false;
  double weight_decay = 0.0;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (patience < 0 || patience > epochs)
      throw std::invalid_argument("TrainConfig: patience must lie in [0, epochs]");
    if (!(input_dropout >= 0.0 && input_dropout < 1.0))
      throw std::invalid_argument("TrainConfig: input_dropout must lie in [0, 1)");
    if (q_dim < 1) throw std::invalid_argument("TrainConfig: q_dim must be >= 1");
    if (heads < 1) throw std::invalid_argument("TrainConfig: heads must be >= 1");
    if (depth < 1) throw std::invalid_argument("TrainConfig: depth must be >= 1");
  }

  double resolved_learning_rate() const {
    if (learning_rate >= 0.0) return learning_rate;
    return encoder == EncoderKind::kGcn ? 1e-3 : 5e-3;
  }

  int resolved_rep_dim() const {
    if (rep_dim > 0) return rep_dim;
    return encoder == EncoderKind::kGcn ? 512 : 64;
  }

  ModelShape model_shape(int feature_dim, int metapaths) const {
    ModelShape s;
    s.encoder = encoder;
    s.readout = readout;
    s.metapaths = metapaths;
    s.feature_dim = feature_dim;
    s.rep_dim = resolved_rep_dim();
    s.q_dim = q_dim;
    s.heads = heads;
    s.depth = depth;
    s.gcn_prelu = gcn_prelu;
    s.gat_activation = gat_activation;
    return s;
  }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> betas;
};

struct TrainResult {
  ModelParams params;
  Tensor embeddings;  // N x F, positive branch under the best parameters
  std::vector<EpochLog> log;
  std::vector<SparseMatrixPtr> adjacencies;
  int best_epoch = 0;
  double best_loss = 0.0;
};

namespace detail {

struct ForwardOutput {
  TensorPtr h;           // fused positive representations
  TensorPtr beta;        // 1 x P
  TensorPtr h_negative;  // only when corruption provided
};

// Shared by train and embed so embeddings are reproduced bit for bit:
// encode every meta-path, weight by semantic attention, fuse. The negative
// branch reuses the positive beta unless per_branch_beta is set.
inline ForwardOutput model_forward(const TensorPtr& x, const TensorPtr& x_tilde,
                                   const std::vector<MetaPathInputs>& inputs,
                                   const ModelParams& params, bool per_branch_beta, Tape& tape) {
  ForwardOutput out;
  std::vector<TensorPtr> hs = encode_all(x, inputs, params.encoder, tape);
  std::vector<TensorPtr> importances = metapath_importance(hs, params.semattn, tape);
  out.beta = attention_weights(importances, tape);
  out.h = fuse(hs, out.beta, tape);
  if (x_tilde) {
    std::vector<TensorPtr> hs_neg = encode_all(x_tilde, inputs, params.encoder, tape);
    TensorPtr beta_neg = out.beta;
    if (per_branch_beta)
      beta_neg = attention_weights(metapath_importance(hs_neg, params.semattn, tape), tape);
    out.h_negative = fuse(hs_neg, beta_neg, tape);
  }
  return out;
}

inline TensorPtr dropout_mask(int rows, int cols, double p, Rng& rng) {
  auto mask = make_tensor(rows, cols);
  const double keep = 1.0 - p;
  for (auto& v : mask->data) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mask;
}

inline std::vector<SparseMatrixPtr> derive_all(const HeteroGraph& graph,
                                               const std::vector<MetaPathSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("derive_all: no meta-path specs");
  std::vector<SparseMatrixPtr> out;
  out.reserve(specs.size());
  for (const auto& spec : specs)
    out.push_back(std::make_shared<const SparseMatrix>(derive_metapath_adjacency(graph, spec)));
  return out;
}

}  // namespace detail

// Deterministic inference pass: returns the fused positive-branch
// representations H under the given parameters.
inline Tensor embed_with_inputs(const TensorPtr& x, const std::vector<MetaPathInputs>& inputs,
                                const ModelParams& params) {
  Tape tape;
  return *detail::model_forward(x, nullptr, inputs, params, false, tape).h;
}

inline Tensor embed(const HeteroGraph& graph, const std::vector<MetaPathSpec>& specs,
                    const ModelParams& params) {
  const auto adjacencies = detail::derive_all(graph, specs);
  const auto inputs = prepare_metapath_inputs(adjacencies, params.encoder.kind);
  if (static_cast<int>(specs.size()) != params.shape.metapaths)
    throw std::invalid_argument("embed: spec count does not match parameters");
  if (graph.feature_dim() != params.shape.feature_dim)
    throw std::invalid_argument("embed: feature dimension does not match parameters");
  auto x = make_constant(graph.features());
  return embed_with_inputs(x, inputs, params);
}

// Full training loop. Per epoch: encode both branches (fresh corruption each
// time), summarize the positive branch, score all N positive and N negative
// rows, minimize the BCE, Adam-update. Early stopping restores the
// best-loss parameters.
inline TrainResult train(const HeteroGraph& graph, const std::vector<MetaPathSpec>& specs,
                         const TrainConfig& config) {
  config.validate();
  const int n = graph.target_count();
  if (n < 2) throw std::invalid_argument("train: need at least 2 target nodes");

  TrainResult result;
  result.adjacencies = detail::derive_all(graph, specs);
  const auto inputs = prepare_metapath_inputs(result.adjacencies, config.encoder);

  Rng rng(config.seed);
  result.params = init_model_params(
      config.model_shape(graph.feature_dim(), static_cast<int>(specs.size())), rng);
  const std::vector<TensorPtr> trainable = result.params.trainable();

  AdamState adam{AdamHyperParams{config.resolved_learning_rate(), 0.9, 0.999, 1e-8,
                                 config.weight_decay}};
  auto x = make_constant(graph.features());

  std::vector<Tensor> best = snapshot_values(result.params);
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_without_improvement = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Tape tape;
    CorruptionOutput corruption = corrupt(graph.features(), rng);

    TensorPtr x_pos = x;
    TensorPtr x_neg = corruption.x_tilde;
    if (config.input_dropout > 0.0) {
      x_pos = elementwise_mul(
          x_pos, detail::dropout_mask(n, x->cols, config.input_dropout, rng), tape);
      x_neg = elementwise_mul(
          x_neg, detail::dropout_mask(n, x->cols, config.input_dropout, rng), tape);
    }

    detail::ForwardOutput fwd = detail::model_forward(x_pos, x_neg, inputs, result.params,
                                                      config.per_branch_beta, tape);
    TensorPtr summary = apply_readout(fwd.h, result.params.readout, tape);
    TensorPtr pos_logits = discriminator_logits(fwd.h, result.params.discriminator, summary, tape);
    TensorPtr neg_logits =
        discriminator_logits(fwd.h_negative, result.params.discriminator, summary, tape);
    TensorPtr loss = bce_loss(pos_logits, neg_logits, tape);

    const double loss_value = loss->data[0];
    if (!std::isfinite(loss_value))
      throw std::runtime_error("train: non-finite loss " + std::to_string(loss_value) +
                               " at epoch " + std::to_string(epoch));
    result.log.push_back(EpochLog{epoch, loss_value, fwd.beta->data});

    if (loss_value < best_loss) {
      best_loss = loss_value;
      best_epoch = epoch;
      best = snapshot_values(result.params);
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= config.patience) {
      break;
    }

    backward(tape, loss);
    adam_step(trainable, adam);
  }

  restore_values(result.params, best);
  result.best_epoch = best_epoch;
  result.best_loss = best_loss;  // +inf when epochs == 0
  result.embeddings = embed_with_inputs(x, inputs, result.params);
  return result;
}

// The complete training objective for one fixed corruption draw. Used by
// gradient checking; train() builds the same graph inline.
inline TensorPtr full_loss(const TensorPtr& x, const TensorPtr& x_tilde,
                           const std::vector<MetaPathInputs>& inputs, const ModelParams& params,
                           bool per_branch_beta, Tape& tape) {
  detail::ForwardOutput fwd = detail::model_forward(x, x_tilde, inputs, params, per_branch_beta, tape);
  TensorPtr summary = apply_readout(fwd.h, params.readout, tape);
  TensorPtr pos = discriminator_logits(fwd.h, params.discriminator, summary, tape);
  TensorPtr neg = discriminator_logits(fwd.h_negative, params.discriminator, summary, tape);
  return bce_loss(pos, neg, tape);
}

// Finite-difference check of the complete loss on a given graph. All
// parameters including the discriminator are randomized so no gradient path
// is trivially zero, and the corruption is drawn once and frozen.
inline GradCheckReport grad_check_full_loss(const HeteroGraph& graph,
                                            const std::vector<MetaPathSpec>& specs,
                                            const TrainConfig& config) {
  const auto adjacencies = detail::derive_all(graph, specs);
  const auto inputs = prepare_metapath_inputs(adjacencies, config.encoder);
  Rng rng(config.seed);
  ModelParams params = init_model_params(
      config.model_shape(graph.feature_dim(), static_cast<int>(specs.size())), rng);
  params.discriminator.weight->data = glorot_uniform(params.shape.rep_dim, params.shape.rep_dim, rng).data;
  auto x = make_constant(graph.features());
  const TensorPtr x_tilde = corrupt(graph.features(), rng).x_tilde;
  const bool per_branch = config.per_branch_beta;
  return grad_check(params.trainable(), [&, x, x_tilde](Tape& tape) {
    return full_loss(x, x_tilde, inputs, params, per_branch, tape);
  });
}

}  // namespace hdgi
