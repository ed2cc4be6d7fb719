#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "backdrop/tensor.hpp"

namespace backdrop {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12),
// where analytic comes from the tape and central from (f(x+eps) - f(x-eps)) / 2eps.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

// Same measure, but the analytic gradient of `f` is compared with central
// differences of `reference` (e.g. a surrogate with the same gradient).
double finite_diff_check(const ScalarFn& f, const ScalarFn& reference, const Tensor& x, double eps = 1e-5);

struct GradCheckResult {
  std::string name;
  int instances = 0;
  double max_error = 0.0;
  bool passed = false;
};

// Every differentiable layer and loss on random small instances.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 7, int instances = 5, double tolerance = 1e-4);

}  // namespace backdrop
