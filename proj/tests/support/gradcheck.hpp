#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsforge/tensor.hpp"

namespace testsupport {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;
};

// Central-finite-difference check of the tape gradients. loss_fn must be a
// deterministic function of the current values of `leaves`; it is re-run
// (without a tape) for every perturbed entry.
inline GradCheckResult check_gradients(const std::function<tsforge::Tensor()>& loss_fn,
                                       std::vector<tsforge::Tensor> leaves,
                                       double step = 1e-5) {
  using tsforge::Tape;
  using tsforge::Tensor;

  std::vector<std::vector<double>> analytic;
  {
    for (auto& leaf : leaves) leaf.zero_grad();
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (auto& leaf : leaves) {
      analytic.emplace_back(leaf.numel(), 0.0);
      if (leaf.has_grad()) {
        std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.back().begin());
      }
    }
    for (auto& leaf : leaves) leaf.zero_grad();
  }

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      double original = values[i];
      values[i] = original + step;
      double f_plus = loss_fn().item();
      values[i] = original - step;
      double f_minus = loss_fn().item();
      values[i] = original;
      double numeric = (f_plus - f_minus) / (2.0 * step);
      double a = analytic[li][i];
      double rel = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst = "leaf " + std::to_string(li) + " index " + std::to_string(i) +
                       ": analytic " + std::to_string(a) + ", numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace testsupport
