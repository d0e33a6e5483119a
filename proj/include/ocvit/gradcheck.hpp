#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ocvit/tensor.hpp"

namespace ocvit {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double rel_tol = 0.0;
  bool pass = true;
};

using DifferentiableOp = std::function<Tensor(std::span<const Tensor>)>;

/// Compares the analytic gradient of op at the given point against central
/// finite differences (step 1e-5). The op output is reduced to a scalar with
/// fixed pseudo-random weights; errors are relative to max(1, |analytic|,
/// |numeric|).
GradCheckReport grad_check(const DifferentiableOp& op,
                           const std::vector<Tensor>& point, double rel_tol);

}  // namespace ocvit
