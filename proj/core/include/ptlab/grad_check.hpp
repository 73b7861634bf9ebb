#pragma once

#include <functional>
#include <vector>

#include "ptlab/tensor.hpp"

namespace ptlab {

// f builds a scalar loss from `inputs` on the given graph. It must be a pure
// function of the input values (re-evaluated many times).
using ScalarFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t n_checked = 0;
};

// Central-difference gradient check. Analytic gradients come from one
// backward pass; numeric ones from (f(x+h) - f(x-h)) / 2h per element with
// h = eps * max(1, |x|), accumulated in float64. Relative error per element
// is |a - n| / max(|a|, |n|, 1e-8); the max over all elements of all inputs
// is returned. Reports, never asserts.
GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps);

}  // namespace ptlab
