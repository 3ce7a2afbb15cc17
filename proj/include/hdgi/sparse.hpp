#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hdgi {

// Compressed sparse row matrix. col_idx is sorted and unique within each
// row; row_ptr is monotone with row_ptr[0] == 0. Immutable after
// construction by convention — every producer calls validate().
struct SparseMatrix {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> values;

  SparseMatrix() : row_ptr(1, 0) {}
  SparseMatrix(int r, int c) : n_rows(r), n_cols(c), row_ptr(static_cast<std::size_t>(r) + 1, 0) {}

  int nnz() const { return static_cast<int>(col_idx.size()); }

  std::pair<int, int> row_range(int r) const {
    return {row_ptr[static_cast<std::size_t>(r)], row_ptr[static_cast<std::size_t>(r) + 1]};
  }

  double get(int r, int c) const {
    auto [b, e] = row_range(r);
    auto it = std::lower_bound(col_idx.begin() + b, col_idx.begin() + e, c);
    if (it != col_idx.begin() + e && *it == c)
      return values[static_cast<std::size_t>(it - col_idx.begin())];
    return 0.0;
  }

  void validate() const {
    if (n_rows < 0 || n_cols < 0)
      throw std::invalid_argument("SparseMatrix: negative dimension");
    if (row_ptr.size() != static_cast<std::size_t>(n_rows) + 1)
      throw std::invalid_argument("SparseMatrix: row_ptr size mismatch");
    if (row_ptr.front() != 0 || row_ptr.back() != nnz())
      throw std::invalid_argument("SparseMatrix: row_ptr endpoints invalid");
    if (values.size() != col_idx.size())
      throw std::invalid_argument("SparseMatrix: values/col_idx size mismatch");
    for (int r = 0; r < n_rows; ++r) {
      auto [b, e] = row_range(r);
      if (e < b) throw std::invalid_argument("SparseMatrix: row_ptr not monotone");
      for (int k = b; k < e; ++k) {
        const int c = col_idx[static_cast<std::size_t>(k)];
        if (c < 0 || c >= n_cols)
          throw std::invalid_argument("SparseMatrix: column index out of range");
        if (k > b && col_idx[static_cast<std::size_t>(k - 1)] >= c)
          throw std::invalid_argument("SparseMatrix: columns not sorted unique in row " +
                                      std::to_string(r));
      }
    }
  }

  // Builds a binary CSR from (row, col) pairs; duplicates collapse to one.
  static SparseMatrix from_pairs(int n_rows, int n_cols,
                                 std::vector<std::pair<int, int>> pairs) {
    for (const auto& [r, c] : pairs) {
      if (r < 0 || r >= n_rows || c < 0 || c >= n_cols)
        throw std::invalid_argument("SparseMatrix::from_pairs: index out of range");
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    SparseMatrix m(n_rows, n_cols);
    m.col_idx.reserve(pairs.size());
    std::size_t k = 0;
    for (int r = 0; r < n_rows; ++r) {
      while (k < pairs.size() && pairs[k].first == r) {
        m.col_idx.push_back(pairs[k].second);
        ++k;
      }
      m.row_ptr[static_cast<std::size_t>(r) + 1] = static_cast<int>(m.col_idx.size());
    }
    m.values.assign(m.col_idx.size(), 1.0);
    m.validate();
    return m;
  }

  static SparseMatrix identity(int n) {
    SparseMatrix m(n, n);
    m.col_idx.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      m.col_idx[static_cast<std::size_t>(i)] = i;
      m.row_ptr[static_cast<std::size_t>(i) + 1] = i + 1;
    }
    m.values.assign(static_cast<std::size_t>(n), 1.0);
    return m;
  }
};

using SparseMatrixPtr = std::shared_ptr<const SparseMatrix>;

inline bool is_binary(const SparseMatrix& a) {
  return std::all_of(a.values.begin(), a.values.end(), [](double v) { return v == 1.0; });
}

inline bool has_zero_diagonal(const SparseMatrix& a) {
  for (int r = 0; r < std::min(a.n_rows, a.n_cols); ++r) {
    auto [b, e] = a.row_range(r);
    for (int k = b; k < e; ++k)
      if (a.col_idx[static_cast<std::size_t>(k)] == r) return false;
  }
  return true;
}

inline SparseMatrix transpose(const SparseMatrix& a) {
  SparseMatrix t(a.n_cols, a.n_rows);
  std::vector<int> counts(static_cast<std::size_t>(a.n_cols), 0);
  for (int c : a.col_idx) ++counts[static_cast<std::size_t>(c)];
  for (int c = 0; c < a.n_cols; ++c)
    t.row_ptr[static_cast<std::size_t>(c) + 1] = t.row_ptr[static_cast<std::size_t>(c)] + counts[static_cast<std::size_t>(c)];
  t.col_idx.resize(a.col_idx.size());
  t.values.resize(a.values.size());
  std::vector<int> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (int r = 0; r < a.n_rows; ++r) {
    auto [b, e] = a.row_range(r);
    for (int k = b; k < e; ++k) {
      const int c = a.col_idx[static_cast<std::size_t>(k)];
      const int slot = next[static_cast<std::size_t>(c)]++;
      t.col_idx[static_cast<std::size_t>(slot)] = r;
      t.values[static_cast<std::size_t>(slot)] = a.values[static_cast<std::size_t>(k)];
    }
  }
  t.validate();
  return t;
}

// Boolean-semiring product: output entry is 1 iff some shared index links
// row i of a to column j of b. Values saturate at 1 regardless of path
// multiplicity.
inline SparseMatrix bool_multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.n_cols != b.n_rows)
    throw std::invalid_argument("bool_multiply: inner dimensions differ (" +
                                std::to_string(a.n_cols) + " vs " + std::to_string(b.n_rows) + ")");
  SparseMatrix c(a.n_rows, b.n_cols);
  std::vector<char> marked(static_cast<std::size_t>(b.n_cols), 0);
  std::vector<int> touched;
  for (int i = 0; i < a.n_rows; ++i) {
    touched.clear();
    auto [ab, ae] = a.row_range(i);
    for (int ka = ab; ka < ae; ++ka) {
      const int j = a.col_idx[static_cast<std::size_t>(ka)];
      auto [bb, be] = b.row_range(j);
      for (int kb = bb; kb < be; ++kb) {
        const int col = b.col_idx[static_cast<std::size_t>(kb)];
        if (!marked[static_cast<std::size_t>(col)]) {
          marked[static_cast<std::size_t>(col)] = 1;
          touched.push_back(col);
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    for (int col : touched) {
      c.col_idx.push_back(col);
      marked[static_cast<std::size_t>(col)] = 0;
    }
    c.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(c.col_idx.size());
  }
  c.values.assign(c.col_idx.size(), 1.0);
  c.validate();
  return c;
}

// a OR a^T over the boolean semiring; input values are treated as nonzero
// pattern only.
inline SparseMatrix symmetrize_binary(const SparseMatrix& a) {
  if (a.n_rows != a.n_cols)
    throw std::invalid_argument("symmetrize_binary: matrix not square");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(a.col_idx.size() * 2);
  for (int r = 0; r < a.n_rows; ++r) {
    auto [b, e] = a.row_range(r);
    for (int k = b; k < e; ++k) {
      const int c = a.col_idx[static_cast<std::size_t>(k)];
      pairs.emplace_back(r, c);
      pairs.emplace_back(c, r);
    }
  }
  return SparseMatrix::from_pairs(a.n_rows, a.n_cols, std::move(pairs));
}

inline SparseMatrix drop_diagonal(const SparseMatrix& a) {
  SparseMatrix out(a.n_rows, a.n_cols);
  for (int r = 0; r < a.n_rows; ++r) {
    auto [b, e] = a.row_range(r);
    for (int k = b; k < e; ++k) {
      const int c = a.col_idx[static_cast<std::size_t>(k)];
      if (c != r) {
        out.col_idx.push_back(c);
        out.values.push_back(a.values[static_cast<std::size_t>(k)]);
      }
    }
    out.row_ptr[static_cast<std::size_t>(r) + 1] = static_cast<int>(out.col_idx.size());
  }
  out.validate();
  return out;
}

// out (n_rows x x_cols) = S * X, X dense row-major.
inline void spmm(const SparseMatrix& s, const double* x, int x_cols, double* out) {
  for (int r = 0; r < s.n_rows; ++r) {
    double* orow = out + static_cast<std::size_t>(r) * x_cols;
    std::fill(orow, orow + x_cols, 0.0);
    auto [b, e] = s.row_range(r);
    for (int k = b; k < e; ++k) {
      const int c = s.col_idx[static_cast<std::size_t>(k)];
      const double v = s.values[static_cast<std::size_t>(k)];
      const double* xrow = x + static_cast<std::size_t>(c) * x_cols;
      for (int j = 0; j < x_cols; ++j) orow[j] += v * xrow[j];
    }
  }
}

// out (n_cols x x_cols) += S^T * X without materializing the transpose.
inline void spmm_transpose_accumulate(const SparseMatrix& s, const double* x, int x_cols,
                                      double* out) {
  for (int r = 0; r < s.n_rows; ++r) {
    auto [b, e] = s.row_range(r);
    const double* xrow = x + static_cast<std::size_t>(r) * x_cols;
    for (int k = b; k < e; ++k) {
      const int c = s.col_idx[static_cast<std::size_t>(k)];
      const double v = s.values[static_cast<std::size_t>(k)];
      double* orow = out + static_cast<std::size_t>(c) * x_cols;
      for (int j = 0; j < x_cols; ++j) orow[j] += v * xrow[j];
    }
  }
}

}  // namespace hdgi
