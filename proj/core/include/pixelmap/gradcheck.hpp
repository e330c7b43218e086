#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pixelmap/tensor.hpp"

namespace pixelmap {

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::string label;
  double max_rel_err = 0.0;
  double tol = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  std::vector<GradCheckEntry> flagged;  // entries with rel_err > tol
  std::string error;                    // non-finite or thrown during evaluation
};

// Compares an analytic gradient against central differences
// (f(x+h) - f(x-h)) / 2h, elementwise. The relative error uses a unit floor,
// |a - n| / max(1, |a|, |n|), so near-zero entries are judged on absolute
// error. f must be deterministic: two calls at the same x give the same
// value. Non-finite values anywhere produce a failure report.
GradCheckReport gradcheck(const std::string& label,
                          const std::function<double(const Tensor&)>& f,
                          const Tensor& analytic_grad, const Tensor& x0,
                          double h = 1e-5, double tol = 1e-6);

class Tape;

// Checks d(cot . fwd())/d(target) for one differentiable tensor `target`
// (an op input or a layer parameter). fwd must re-read *target on every call;
// the fixed random cotangent turns the op into a scalar so the central
// difference applies. target's values are restored before returning.
GradCheckReport check_op_gradient(const std::string& label,
                                  const std::function<Tensor*(Tape&)>& fwd,
                                  Tensor& target, std::uint64_t cot_seed,
                                  double h = 1e-5, double tol = 1e-6);

}  // namespace pixelmap
