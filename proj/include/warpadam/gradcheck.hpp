#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace warpadam {

struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_error = 0.0;  // worst relative (or absolute, see name) error over trials
  double tolerance = 0.0;
  bool passed = false;
};

struct CheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 7;
  // Name of a primitive whose gradient rule is replaced by a wrong one; used
  // to show the checks can fail.
  std::string corrupt_rule;
};

// Every differentiable primitive, the MLP loss gradient and a Hessian-vector
// product against central differences (h = 1e-5, tolerance 1e-5).
std::vector<CheckResult> run_gradient_checks(const CheckOptions& options);

// Full-unroll hypergradients against central differences on a small MLP
// (h = 1e-6, tolerance 1e-4), plus the Kronecker/Dense equivalence and the
// identity-warp reduction.
std::vector<CheckResult> run_warp_checks(const CheckOptions& options);

}  // namespace warpadam
