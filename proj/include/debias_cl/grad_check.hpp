#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "debias_cl/autodiff.hpp"

namespace debias_cl {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates_checked = 0;
};

// Compares taped gradients of a scalar function against central differences.
// `f` is called as f(Tape&, const std::vector<Var>& params) -> Var and must
// rebuild its graph on every call. Per coordinate the error is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
template <class F>
GradCheckResult grad_check(F&& f, const std::vector<Tensor>& params, double epsilon = 1e-6) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) throw DomainError("grad_check: epsilon must lie in (0, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    Var root = f(tape, leaves);
    if (!std::isfinite(root.value().item())) throw NumericError("grad_check: non-finite loss at the base point");
    tape.backward(root);
    for (const Var& leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  auto evaluate = [&](const std::vector<Tensor>& point, std::size_t pi, std::size_t ci) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : point) leaves.push_back(tape.constant(p));
    const double v = f(tape, leaves).value().item();
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite loss at perturbed point (param " + std::to_string(pi) +
                         ", coordinate " + std::to_string(ci) + ")");
    }
    return v;
  };

  GradCheckResult result;
  std::vector<Tensor> point = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t ci = 0; ci < params[pi].numel(); ++ci) {
      const double original = point[pi][ci];
      point[pi][ci] = original + epsilon;
      const double plus = evaluate(point, pi, ci);
      point[pi][ci] = original - epsilon;
      const double minus = evaluate(point, pi, ci);
      point[pi][ci] = original;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[pi][ci];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = pi;
        result.worst_coordinate = ci;
      }
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace debias_cl
