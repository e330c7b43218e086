#pragma once

#include <cstdint>
#include <vector>

#include "pixelmap/gradcheck.hpp"

namespace pixelmap {

// One finite-difference sweep over the whole differentiable surface:
// every primitive op (including each one's weights and bias), every loss,
// and composed tiny end-to-end models for all four tasks. Primitives and
// losses are held to 1e-6 relative; full model chains, whose difference
// quotients stack more roundoff, to 1e-4. Inputs that sit on a kink
// (relu, maxpool ties) are nudged off it first, since the two-sided
// quotient is meaningless across a branch point.
struct SuiteOptions {
  std::uint64_t seed = 1;
  double h = 1e-5;
  // Negative control: adds one fixture whose hand-written gradient has a
  // flipped sign, proving the suite can actually fail.
  bool inject_fault = false;
};

std::vector<GradCheckReport> gradcheck_suite(const SuiteOptions& opts = {});

bool suite_passed(const std::vector<GradCheckReport>& reports);

}  // namespace pixelmap
