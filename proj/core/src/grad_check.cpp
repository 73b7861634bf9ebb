#include "ptlab/grad_check.hpp"

#include <cmath>

#include "ptlab/error.hpp"

namespace ptlab {

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps) {
  if (eps <= 0.0) throw Error(ErrorCategory::internal, "grad_check: eps must be positive");

  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  // analytic pass
  std::vector<std::vector<float>> analytic;
  {
    Graph g;
    Tensor loss = f(g, inputs);
    g.backward(loss);
    for (Tensor& t : inputs) {
      auto gr = t.grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }

  auto eval = [&]() -> double {
    Graph g;
    return f(g, inputs).item64();
  };

  GradCheckResult res;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto vals = inputs[ti].data();
    for (size_t i = 0; i < vals.size(); ++i) {
      const float orig = vals[i];
      const double h = eps * std::max(1.0, std::abs(static_cast<double>(orig)));
      vals[i] = static_cast<float>(orig + h);
      const double fp = eval();
      vals[i] = static_cast<float>(orig - h);
      const double fm = eval();
      vals[i] = orig;

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[ti][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      res.n_checked += 1;
    }
  }
  return res;
}

}  // namespace ptlab
