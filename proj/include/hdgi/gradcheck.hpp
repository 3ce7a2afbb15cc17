#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdgi/tape.hpp"
#include "hdgi/tensor.hpp"

namespace hdgi {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;

  bool passes(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares tape adjoints against central finite differences for every entry
// of every leaf. `build` must construct the same scalar computation each
// call; it is invoked once on a tape for the analytic pass and twice per
// entry for the numeric one.
inline GradCheckReport grad_check(const std::vector<TensorPtr>& leaves,
                                  const std::function<TensorPtr(Tape&)>& build,
                                  double fd_step = 1e-6) {
  for (const auto& leaf : leaves) {
    leaf->ensure_grad();
    leaf->zero_grad();
  }
  Tape tape;
  TensorPtr loss = build(tape);
  if (!loss || !loss->is_scalar())
    throw std::invalid_argument("grad_check: computation must produce a scalar");
  backward(tape, loss);

  auto eval = [&]() {
    Tape t;
    return build(t)->data[0];
  };

  GradCheckReport report;
  for (std::size_t pi = 0; pi < leaves.size(); ++pi) {
    Tensor& leaf = *leaves[pi];
    for (std::size_t k = 0; k < leaf.size(); ++k) {
      const double saved = leaf.data[k];
      leaf.data[k] = saved + fd_step;
      const double up = eval();
      leaf.data[k] = saved - fd_step;
      const double down = eval();
      leaf.data[k] = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double analytic = leaf.grad[k];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-2});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_entry = k;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  for (const auto& leaf : leaves) leaf->zero_grad();
  return report;
}

}  // namespace hdgi
