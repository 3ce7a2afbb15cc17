#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hdgi/sparse.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

enum class OpKind {
  kMatmul,
  kSparseDenseMatmul,
  kAdd,
  kAddRowBias,
  kElementwiseMul,
  kConcatCols,
  kMeanRows,
  kMaxRows,
  kSumAll,
  kScalarScale,
  kTanh,
  kSigmoid,
  kPrelu,
  kLeakyRelu,
  kSoftmaxOverMask,
  kBilinearForm,
  kLog,
  kRowSelect,
  kTranspose,
  kElu,
};

// Optional per-op arguments. Only the fields an op kind reads are consulted.
struct OpAttrs {
  double scalar = 1.0;      // kScalarScale constant factor, kLeakyRelu slope
  SparseMatrixPtr sparse;   // kSparseDenseMatmul left operand
  TensorPtr mask;           // kSoftmaxOverMask binary mask, same shape as input
  std::vector<int> indices; // kRowSelect row gather list
};

namespace detail {

// C(n x m) += A(n x k) * B(k x m), all row-major.
inline void mm_acc(const double* a, int n, int k, const double* b, int m, double* c) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(l) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(n x k) += A(n x m) * B^T, with B stored (k x m).
inline void mm_abt_acc(const double* a, int n, int m, const double* b, int k, double* c) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * m;
    double* crow = c + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * m;
      double dot = 0.0;
      for (int l = 0; l < m; ++l) dot += arow[l] * brow[l];
      crow[j] += dot;
    }
  }
}

// C(k x m) += A^T * B, with A stored (n x k), B (n x m).
inline void mm_atb_acc(const double* a, int n, int k, const double* b, int m, double* c) {
  for (int l = 0; l < n; ++l) {
    const double* arow = a + static_cast<std::size_t>(l) * k;
    const double* brow = b + static_cast<std::size_t>(l) * m;
    for (int i = 0; i < k; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double stable_sigmoid(double x) {
  const double z = std::clamp(x, -40.0, 40.0);
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

struct OpNode {
  OpKind kind;
  std::vector<TensorPtr> inputs;
  TensorPtr output;
  double scalar = 1.0;
  SparseMatrixPtr sparse;
  TensorPtr mask;
  std::vector<int> indices;  // kRowSelect gather rows; kMaxRows argmax per column
  std::vector<int> offsets;  // kConcatCols column offsets per input
};

// Records the forward computation in execution order, which is already a
// topological order; backward() replays it once in reverse.
class Tape {
 public:
  const std::vector<OpNode>& nodes() const { return nodes_; }
  bool consumed() const { return consumed_; }

  void record(OpNode node) { nodes_.push_back(std::move(node)); }
  void mark_consumed() { consumed_ = true; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<OpNode> nodes_;
  bool consumed_ = false;
};

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" + detail + ")");
}

inline Tensor forward_op(OpKind kind, const std::vector<TensorPtr>& in, OpNode& node) {
  switch (kind) {
    case OpKind::kMatmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.cols != b.rows) shape_error("matmul", a.shape_str() + " * " + b.shape_str());
      Tensor out(a.rows, b.cols);
      mm_acc(a.data.data(), a.rows, a.cols, b.data.data(), b.cols, out.data.data());
      return out;
    }
    case OpKind::kSparseDenseMatmul: {
      const SparseMatrix& s = *node.sparse;
      const Tensor& x = *in[0];
      if (s.n_cols != x.rows)
        shape_error("sparse_dense_matmul",
                    std::to_string(s.n_rows) + "x" + std::to_string(s.n_cols) + " * " + x.shape_str());
      Tensor out(s.n_rows, x.cols);
      spmm(s, x.data.data(), x.cols, out.data.data());
      return out;
    }
    case OpKind::kAdd: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (!a.same_shape(b)) shape_error("add", a.shape_str() + " + " + b.shape_str());
      Tensor out = a;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
      out.grad.clear();
      return out;
    }
    case OpKind::kAddRowBias: {
      const Tensor& x = *in[0];
      const Tensor& b = *in[1];
      if (b.rows != 1 || b.cols != x.cols)
        shape_error("add_row_bias", x.shape_str() + " + " + b.shape_str());
      Tensor out = x;
      out.grad.clear();
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) out.at(r, c) += b.data[static_cast<std::size_t>(c)];
      return out;
    }
    case OpKind::kElementwiseMul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (!a.same_shape(b)) shape_error("elementwise_mul", a.shape_str() + " vs " + b.shape_str());
      Tensor out(a.rows, a.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
      return out;
    }
    case OpKind::kConcatCols: {
      if (in.empty()) throw std::invalid_argument("concat_cols: no inputs");
      const int rows = in[0]->rows;
      int total = 0;
      node.offsets.clear();
      for (const auto& t : in) {
        if (t->rows != rows) shape_error("concat_cols", "row counts differ");
        node.offsets.push_back(total);
        total += t->cols;
      }
      Tensor out(rows, total);
      for (std::size_t i = 0; i < in.size(); ++i) {
        const Tensor& t = *in[i];
        const int off = node.offsets[i];
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < t.cols; ++c) out.at(r, off + c) = t.at(r, c);
      }
      return out;
    }
    case OpKind::kMeanRows: {
      const Tensor& x = *in[0];
      if (x.rows < 1) throw std::invalid_argument("mean_rows: empty matrix");
      Tensor out(1, x.cols);
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) out.data[static_cast<std::size_t>(c)] += x.at(r, c);
      for (auto& v : out.data) v /= x.rows;
      return out;
    }
    case OpKind::kMaxRows: {
      const Tensor& x = *in[0];
      if (x.rows < 1) throw std::invalid_argument("max_rows: empty matrix");
      Tensor out(1, x.cols);
      node.indices.assign(static_cast<std::size_t>(x.cols), 0);
      for (int c = 0; c < x.cols; ++c) {
        double best = x.at(0, c);
        int arg = 0;
        for (int r = 1; r < x.rows; ++r) {
          if (x.at(r, c) > best) {
            best = x.at(r, c);
            arg = r;
          }
        }
        out.data[static_cast<std::size_t>(c)] = best;
        node.indices[static_cast<std::size_t>(c)] = arg;
      }
      return out;
    }
    case OpKind::kSumAll: {
      const Tensor& x = *in[0];
      Tensor out(1, 1);
      for (double v : x.data) out.data[0] += v;
      return out;
    }
    case OpKind::kScalarScale: {
      const Tensor& x = *in[0];
      double s = node.scalar;
      if (in.size() == 2) {
        if (!in[1]->is_scalar()) shape_error("scalar_scale", "scale operand must be 1x1");
        s = in[1]->data[0];
      }
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * x.data[i];
      return out;
    }
    case OpKind::kTanh: {
      Tensor out = *in[0];
      out.grad.clear();
      for (auto& v : out.data) v = std::tanh(v);
      return out;
    }
    case OpKind::kSigmoid: {
      Tensor out = *in[0];
      out.grad.clear();
      for (auto& v : out.data) v = stable_sigmoid(v);
      return out;
    }
    case OpKind::kPrelu: {
      const Tensor& x = *in[0];
      if (!in[1]->is_scalar()) shape_error("prelu", "slope must be 1x1");
      const double slope = in[1]->data[0];
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x.data[i] >= 0.0 ? x.data[i] : slope * x.data[i];
      return out;
    }
    case OpKind::kLeakyRelu: {
      const Tensor& x = *in[0];
      const double slope = node.scalar;
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x.data[i] >= 0.0 ? x.data[i] : slope * x.data[i];
      return out;
    }
    case OpKind::kSoftmaxOverMask: {
      const Tensor& x = *in[0];
      const Tensor& m = *node.mask;
      if (!x.same_shape(m)) shape_error("softmax_over_mask", x.shape_str() + " vs mask " + m.shape_str());
      Tensor out(x.rows, x.cols);
      for (int r = 0; r < x.rows; ++r) {
        double maxv = -std::numeric_limits<double>::infinity();
        bool has_active = false;
        for (int c = 0; c < x.cols; ++c) {
          if (m.at(r, c) != 0.0) {
            has_active = true;
            if (std::isnan(x.at(r, c)))
              throw std::runtime_error("softmax_over_mask: non-finite logit in row " +
                                       std::to_string(r));
            maxv = std::max(maxv, x.at(r, c));
          }
        }
        if (!has_active)
          throw std::invalid_argument("softmax_over_mask: row " + std::to_string(r) +
                                      " has no active entries");
        if (!std::isfinite(maxv))
          throw std::runtime_error("softmax_over_mask: non-finite logit in row " +
                                   std::to_string(r));
        double denom = 0.0;
        for (int c = 0; c < x.cols; ++c)
          if (m.at(r, c) != 0.0) denom += std::exp(x.at(r, c) - maxv);
        for (int c = 0; c < x.cols; ++c)
          if (m.at(r, c) != 0.0) out.at(r, c) = std::exp(x.at(r, c) - maxv) / denom;
      }
      return out;
    }
    case OpKind::kBilinearForm: {
      const Tensor& h = *in[0];
      const Tensor& w = *in[1];
      const Tensor& s = *in[2];
      if (w.rows != h.cols || w.cols != s.rows || s.cols != 1)
        shape_error("bilinear_form",
                    h.shape_str() + " , " + w.shape_str() + " , " + s.shape_str());
      std::vector<double> ws(static_cast<std::size_t>(w.rows), 0.0);
      for (int i = 0; i < w.rows; ++i)
        for (int j = 0; j < w.cols; ++j) ws[static_cast<std::size_t>(i)] += w.at(i, j) * s.data[static_cast<std::size_t>(j)];
      Tensor out(h.rows, 1);
      for (int r = 0; r < h.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < h.cols; ++c) dot += h.at(r, c) * ws[static_cast<std::size_t>(c)];
        out.data[static_cast<std::size_t>(r)] = dot;
      }
      return out;
    }
    case OpKind::kLog: {
      const Tensor& x = *in[0];
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (x.data[i] <= 0.0)
          throw std::domain_error("log: non-positive input " + std::to_string(x.data[i]));
        out.data[i] = std::log(x.data[i]);
      }
      return out;
    }
    case OpKind::kRowSelect: {
      const Tensor& x = *in[0];
      Tensor out(static_cast<int>(node.indices.size()), x.cols);
      int r = 0;
      for (int idx : node.indices) {
        if (idx < 0 || idx >= x.rows)
          throw std::invalid_argument("row_select: index " + std::to_string(idx) + " out of range");
        for (int c = 0; c < x.cols; ++c) out.at(r, c) = x.at(idx, c);
        ++r;
      }
      return out;
    }
    case OpKind::kTranspose: {
      const Tensor& x = *in[0];
      Tensor out(x.cols, x.rows);
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) out.at(c, r) = x.at(r, c);
      return out;
    }
    case OpKind::kElu: {
      const Tensor& x = *in[0];
      Tensor out(x.rows, x.cols);
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x.data[i] >= 0.0 ? x.data[i] : std::expm1(x.data[i]);
      return out;
    }
  }
  throw std::invalid_argument("apply_op: unknown op kind");
}

inline std::size_t expected_arity(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul:
    case OpKind::kAdd:
    case OpKind::kAddRowBias:
    case OpKind::kElementwiseMul:
    case OpKind::kPrelu:
      return 2;
    case OpKind::kBilinearForm:
      return 3;
    case OpKind::kConcatCols:
    case OpKind::kScalarScale:
      return 0;  // variadic / one-or-two
    default:
      return 1;
  }
}

}  // namespace detail

// Computes the forward value of one op. A node is recorded on the tape only
// when some input requires grad; constant subgraphs are evaluated eagerly
// and stay off the tape.
inline TensorPtr apply_op(OpKind kind, const std::vector<TensorPtr>& inputs, Tape& tape,
                          OpAttrs attrs = {}) {
  if (inputs.empty()) throw std::invalid_argument("apply_op: no inputs");
  for (const auto& t : inputs)
    if (!t) throw std::invalid_argument("apply_op: null input tensor");
  const std::size_t arity = detail::expected_arity(kind);
  if (arity != 0 && inputs.size() != arity)
    throw std::invalid_argument("apply_op: wrong number of inputs");
  if (kind == OpKind::kScalarScale && inputs.size() > 2)
    throw std::invalid_argument("apply_op: scalar_scale takes one or two inputs");
  if (kind == OpKind::kSparseDenseMatmul && !attrs.sparse)
    throw std::invalid_argument("apply_op: sparse_dense_matmul requires a sparse operand");
  if (kind == OpKind::kSoftmaxOverMask && !attrs.mask)
    throw std::invalid_argument("apply_op: softmax_over_mask requires a mask");

  OpNode node;
  node.kind = kind;
  node.inputs = inputs;
  node.scalar = attrs.scalar;
  node.sparse = std::move(attrs.sparse);
  node.mask = std::move(attrs.mask);
  node.indices = std::move(attrs.indices);
  if (kind == OpKind::kRowSelect && node.indices.empty())
    throw std::invalid_argument("apply_op: row_select requires indices");

  TensorPtr out = std::make_shared<Tensor>(detail::forward_op(kind, inputs, node));
  bool track = false;
  for (const auto& t : inputs) track = track || t->requires_grad;
  out->requires_grad = track;
  if (track) {
    node.output = out;
    tape.record(std::move(node));
  }
  return out;
}

// -- Named wrappers over the op catalog --------------------------------------

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b, Tape& t) {
  return apply_op(OpKind::kMatmul, {a, b}, t);
}
inline TensorPtr sparse_matmul(SparseMatrixPtr s, const TensorPtr& x, Tape& t) {
  OpAttrs attrs;
  attrs.sparse = std::move(s);
  return apply_op(OpKind::kSparseDenseMatmul, {x}, t, std::move(attrs));
}
inline TensorPtr add(const TensorPtr& a, const TensorPtr& b, Tape& t) {
  return apply_op(OpKind::kAdd, {a, b}, t);
}
inline TensorPtr add_row_bias(const TensorPtr& x, const TensorPtr& bias, Tape& t) {
  return apply_op(OpKind::kAddRowBias, {x, bias}, t);
}
inline TensorPtr elementwise_mul(const TensorPtr& a, const TensorPtr& b, Tape& t) {
  return apply_op(OpKind::kElementwiseMul, {a, b}, t);
}
inline TensorPtr concat_cols(const std::vector<TensorPtr>& parts, Tape& t) {
  return apply_op(OpKind::kConcatCols, parts, t);
}
inline TensorPtr mean_rows(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kMeanRows, {x}, t);
}
inline TensorPtr max_rows(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kMaxRows, {x}, t);
}
inline TensorPtr sum_all(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kSumAll, {x}, t);
}
inline TensorPtr scalar_scale(const TensorPtr& x, double factor, Tape& t) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return apply_op(OpKind::kScalarScale, {x}, t, std::move(attrs));
}
inline TensorPtr scalar_scale(const TensorPtr& x, const TensorPtr& factor, Tape& t) {
  return apply_op(OpKind::kScalarScale, {x, factor}, t);
}
inline TensorPtr tanh(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kTanh, {x}, t);
}
inline TensorPtr sigmoid(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kSigmoid, {x}, t);
}
inline TensorPtr prelu(const TensorPtr& x, const TensorPtr& slope, Tape& t) {
  return apply_op(OpKind::kPrelu, {x, slope}, t);
}
inline TensorPtr leaky_relu(const TensorPtr& x, double slope, Tape& t) {
  OpAttrs attrs;
  attrs.scalar = slope;
  return apply_op(OpKind::kLeakyRelu, {x}, t, std::move(attrs));
}
inline TensorPtr softmax_over_mask(const TensorPtr& x, TensorPtr mask, Tape& t) {
  OpAttrs attrs;
  attrs.mask = std::move(mask);
  return apply_op(OpKind::kSoftmaxOverMask, {x}, t, std::move(attrs));
}
inline TensorPtr bilinear_form(const TensorPtr& h, const TensorPtr& w, const TensorPtr& s,
                               Tape& t) {
  return apply_op(OpKind::kBilinearForm, {h, w, s}, t);
}
inline TensorPtr log(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kLog, {x}, t);
}
inline TensorPtr row_select(const TensorPtr& x, std::vector<int> indices, Tape& t) {
  OpAttrs attrs;
  attrs.indices = std::move(indices);
  return apply_op(OpKind::kRowSelect, {x}, t, std::move(attrs));
}
inline TensorPtr transpose(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kTranspose, {x}, t);
}
inline TensorPtr elu(const TensorPtr& x, Tape& t) {
  return apply_op(OpKind::kElu, {x}, t);
}

namespace detail {

inline void backward_op(const OpNode& node) {
  const Tensor& out = *node.output;
  const std::vector<double>& g = out.grad;
  auto wants = [&](std::size_t i) { return node.inputs[i]->requires_grad; };

  switch (node.kind) {
    case OpKind::kMatmul: {
      Tensor& a = *node.inputs[0];
      Tensor& b = *node.inputs[1];
      if (wants(0)) mm_abt_acc(g.data(), out.rows, out.cols, b.data.data(), a.cols, a.grad.data());
      if (wants(1)) mm_atb_acc(a.data.data(), a.rows, a.cols, g.data(), out.cols, b.grad.data());
      break;
    }
    case OpKind::kSparseDenseMatmul: {
      Tensor& x = *node.inputs[0];
      if (wants(0)) spmm_transpose_accumulate(*node.sparse, g.data(), out.cols, x.grad.data());
      break;
    }
    case OpKind::kAdd: {
      for (int i = 0; i < 2; ++i) {
        if (!wants(static_cast<std::size_t>(i))) continue;
        Tensor& t = *node.inputs[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < g.size(); ++k) t.grad[k] += g[k];
      }
      break;
    }
    case OpKind::kAddRowBias: {
      if (wants(0)) {
        Tensor& x = *node.inputs[0];
        for (std::size_t k = 0; k < g.size(); ++k) x.grad[k] += g[k];
      }
      if (wants(1)) {
        Tensor& b = *node.inputs[1];
        for (int r = 0; r < out.rows; ++r)
          for (int c = 0; c < out.cols; ++c)
            b.grad[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(r) * out.cols + c];
      }
      break;
    }
    case OpKind::kElementwiseMul: {
      Tensor& a = *node.inputs[0];
      Tensor& b = *node.inputs[1];
      if (wants(0))
        for (std::size_t k = 0; k < g.size(); ++k) a.grad[k] += g[k] * b.data[k];
      if (wants(1))
        for (std::size_t k = 0; k < g.size(); ++k) b.grad[k] += g[k] * a.data[k];
      break;
    }
    case OpKind::kConcatCols: {
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        if (!wants(i)) continue;
        Tensor& t = *node.inputs[i];
        const int off = node.offsets[i];
        for (int r = 0; r < t.rows; ++r)
          for (int c = 0; c < t.cols; ++c)
            t.grad_at(r, c) += g[static_cast<std::size_t>(r) * out.cols + off + c];
      }
      break;
    }
    case OpKind::kMeanRows: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      const double inv = 1.0 / x.rows;
      for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) x.grad_at(r, c) += g[static_cast<std::size_t>(c)] * inv;
      break;
    }
    case OpKind::kMaxRows: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (int c = 0; c < x.cols; ++c)
        x.grad_at(node.indices[static_cast<std::size_t>(c)], c) += g[static_cast<std::size_t>(c)];
      break;
    }
    case OpKind::kSumAll: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (auto& gv : x.grad) gv += g[0];
      break;
    }
    case OpKind::kScalarScale: {
      Tensor& x = *node.inputs[0];
      const double s = node.inputs.size() == 2 ? node.inputs[1]->data[0] : node.scalar;
      if (wants(0))
        for (std::size_t k = 0; k < g.size(); ++k) x.grad[k] += s * g[k];
      if (node.inputs.size() == 2 && wants(1)) {
        double acc = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * x.data[k];
        node.inputs[1]->grad[0] += acc;
      }
      break;
    }
    case OpKind::kTanh: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (std::size_t k = 0; k < g.size(); ++k)
        x.grad[k] += g[k] * (1.0 - out.data[k] * out.data[k]);
      break;
    }
    case OpKind::kSigmoid: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (std::size_t k = 0; k < g.size(); ++k)
        x.grad[k] += g[k] * out.data[k] * (1.0 - out.data[k]);
      break;
    }
    case OpKind::kPrelu: {
      Tensor& x = *node.inputs[0];
      const double slope = node.inputs[1]->data[0];
      if (wants(0))
        for (std::size_t k = 0; k < g.size(); ++k)
          x.grad[k] += g[k] * (x.data[k] >= 0.0 ? 1.0 : slope);
      if (wants(1)) {
        double acc = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
          if (x.data[k] < 0.0) acc += g[k] * x.data[k];
        node.inputs[1]->grad[0] += acc;
      }
      break;
    }
    case OpKind::kLeakyRelu: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (std::size_t k = 0; k < g.size(); ++k)
        x.grad[k] += g[k] * (x.data[k] >= 0.0 ? 1.0 : node.scalar);
      break;
    }
    case OpKind::kSoftmaxOverMask: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      const Tensor& m = *node.mask;
      for (int r = 0; r < out.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < out.cols; ++c)
          if (m.at(r, c) != 0.0)
            dot += g[static_cast<std::size_t>(r) * out.cols + c] * out.at(r, c);
        for (int c = 0; c < out.cols; ++c)
          if (m.at(r, c) != 0.0)
            x.grad_at(r, c) +=
                out.at(r, c) * (g[static_cast<std::size_t>(r) * out.cols + c] - dot);
      }
      break;
    }
    case OpKind::kBilinearForm: {
      Tensor& h = *node.inputs[0];
      Tensor& w = *node.inputs[1];
      Tensor& s = *node.inputs[2];
      const int f1 = w.rows, f2 = w.cols;
      std::vector<double> ws(static_cast<std::size_t>(f1), 0.0);
      for (int i = 0; i < f1; ++i)
        for (int j = 0; j < f2; ++j) ws[static_cast<std::size_t>(i)] += w.at(i, j) * s.data[static_cast<std::size_t>(j)];
      // htg = h^T * g, an f1-vector
      std::vector<double> htg(static_cast<std::size_t>(f1), 0.0);
      for (int r = 0; r < h.rows; ++r) {
        const double gr = g[static_cast<std::size_t>(r)];
        if (gr == 0.0) continue;
        for (int c = 0; c < f1; ++c) htg[static_cast<std::size_t>(c)] += gr * h.at(r, c);
      }
      if (wants(0)) {
        for (int r = 0; r < h.rows; ++r) {
          const double gr = g[static_cast<std::size_t>(r)];
          if (gr == 0.0) continue;
          for (int c = 0; c < f1; ++c) h.grad_at(r, c) += gr * ws[static_cast<std::size_t>(c)];
        }
      }
      if (wants(1)) {
        for (int i = 0; i < f1; ++i)
          for (int j = 0; j < f2; ++j)
            w.grad_at(i, j) += htg[static_cast<std::size_t>(i)] * s.data[static_cast<std::size_t>(j)];
      }
      if (wants(2)) {
        for (int j = 0; j < f2; ++j) {
          double acc = 0.0;
          for (int i = 0; i < f1; ++i) acc += w.at(i, j) * htg[static_cast<std::size_t>(i)];
          s.grad[static_cast<std::size_t>(j)] += acc;
        }
      }
      break;
    }
    case OpKind::kLog: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (std::size_t k = 0; k < g.size(); ++k) x.grad[k] += g[k] / x.data[k];
      break;
    }
    case OpKind::kRowSelect: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      int r = 0;
      for (int idx : node.indices) {
        for (int c = 0; c < out.cols; ++c)
          x.grad_at(idx, c) += g[static_cast<std::size_t>(r) * out.cols + c];
        ++r;
      }
      break;
    }
    case OpKind::kTranspose: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) x.grad_at(c, r) += g[static_cast<std::size_t>(r) * out.cols + c];
      break;
    }
    case OpKind::kElu: {
      if (!wants(0)) break;
      Tensor& x = *node.inputs[0];
      for (std::size_t k = 0; k < g.size(); ++k)
        x.grad[k] += g[k] * (x.data[k] >= 0.0 ? 1.0 : out.data[k] + 1.0);
      break;
    }
  }
}

}  // namespace detail

// Reverse pass from a scalar loss. Accumulates (sums) adjoints into the grad
// buffer of every requires_grad tensor reachable from the loss; a tape can be
// walked once.
inline void backward(Tape& tape, const TensorPtr& loss) {
  if (tape.consumed()) throw std::logic_error("backward: tape already consumed");
  if (!loss || !loss->is_scalar()) throw std::invalid_argument("backward: loss is not scalar");
  const auto& nodes = tape.nodes();
  std::ptrdiff_t loss_idx = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(nodes.size()) - 1; i >= 0; --i) {
    if (nodes[static_cast<std::size_t>(i)].output == loss) {
      loss_idx = i;
      break;
    }
  }
  if (loss_idx < 0) throw std::invalid_argument("backward: loss was not produced on this tape");

  for (std::ptrdiff_t i = 0; i <= loss_idx; ++i) {
    const OpNode& n = nodes[static_cast<std::size_t>(i)];
    n.output->ensure_grad();
    for (const auto& t : n.inputs)
      if (t->requires_grad) t->ensure_grad();
  }
  loss->grad[0] = 1.0;
  for (std::ptrdiff_t i = loss_idx; i >= 0; --i)
    detail::backward_op(nodes[static_cast<std::size_t>(i)]);
  tape.mark_consumed();
}

}  // namespace hdgi
