#pragma once

#include <functional>
#include <string>
#include <vector>

#include "duat/tensor.hpp"

namespace duat {

// Central finite-difference verification of recorded gradients.
//
// The scalar function is evaluated on a fresh tape; analytic gradients come
// from backward(), numeric ones from (f(x + e) - f(x - e)) / 2e with
// e = 1e-3 * max(1, |x|). Relative error uses |a - d| / max(|a|, |d|, 1e-6).
// Checked coordinates are subsampled deterministically when a tensor has more
// than `max_coords_per_tensor` entries. Requires f64 engine precision.

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::int64_t coords_checked = 0;
  bool passed(double tol = 1e-4) const { return max_rel_error < tol; }
};

// `leaves` are the tensors whose gradients are verified (they must have
// requires_grad set). `eval` rebuilds the computation and returns the scalar
// loss; it runs under whatever tape the checker provides.
GradCheckResult gradcheck(const std::string& name,
                          const std::function<Tensor()>& eval,
                          const std::vector<Tensor>& leaves,
                          int max_coords_per_tensor = 24,
                          std::uint64_t coord_seed = 17);

// Named checks covering every differentiable op and module, plus the full
// model with the deep-supervision loss. Used by tests and the CLI.
struct GradCheckCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed);

}  // namespace duat
