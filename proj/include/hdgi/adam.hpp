#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdgi/tensor.hpp"

namespace hdgi {

struct AdamHyperParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// First/second moment accumulators, one pair per parameter tensor. The step
// counter t advances by exactly one per adam_step call. Moments are created
// on the first step to match the parameter shapes.
struct AdamState {
  AdamHyperParams hyper;
  long t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamHyperParams hp) : hyper(hp) {}
};

// One Adam update with bias correction; gradients are cleared afterwards.
// Uses the step-size formulation alpha_t = lr * sqrt(1-b2^t) / (1-b1^t)
// applied to the raw moments.
inline void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: parameter list changed size across steps");
  ++state.t;
  const AdamHyperParams& hp = state.hyper;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const double alpha_t = hp.learning_rate * std::sqrt(bc2) / bc1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.has_grad())
      throw std::logic_error("adam_step: parameter " + std::to_string(i) + " has no gradient");
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size())
      throw std::logic_error("adam_step: moment shape does not match parameter " + std::to_string(i));
    for (std::size_t k = 0; k < p.size(); ++k) {
      double g = p.grad[k];
      if (hp.weight_decay != 0.0) g += hp.weight_decay * p.data[k];
      m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g;
      v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g * g;
      p.data[k] -= alpha_t * m[k] / (std::sqrt(v[k]) + hp.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace hdgi
