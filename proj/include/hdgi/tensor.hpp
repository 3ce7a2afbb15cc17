#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdgi/random.hpp"

namespace hdgi {

// Dense row-major matrix of 64-bit floats. Vectors are 1xC or Rx1 tensors,
// scalars are 1x1. The grad buffer is allocated lazily; when present it has
// the same shape as data.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(check_dims(r, c), fill) {}
  Tensor(int r, int c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != check_dims(r, c))
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double& grad_at(int r, int c) { return grad[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  bool has_grad() const { return !grad.empty(); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0);
  }

 private:
  static std::size_t check_dims(int r, int c) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(int r, int c, double fill = 0.0) {
  return std::make_shared<Tensor>(r, c, fill);
}

inline TensorPtr make_tensor(int r, int c, std::vector<double> values) {
  return std::make_shared<Tensor>(r, c, std::move(values));
}

// A leaf whose gradient is tracked (a learnable parameter).
inline TensorPtr make_parameter(Tensor t) {
  auto p = std::make_shared<Tensor>(std::move(t));
  p->requires_grad = true;
  p->ensure_grad();
  return p;
}

inline TensorPtr make_constant(Tensor t) {
  return std::make_shared<Tensor>(std::move(t));
}

// Glorot uniform: range sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

inline Tensor identity_matrix(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace hdgi
