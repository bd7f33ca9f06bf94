#pragma once

#include <functional>
#include <vector>

#include "core/matrix.hpp"

namespace cisskip {

// One (parameter, analytic gradient) pair handed to the checker. The
// parameter is mutated in place during finite differencing and restored.
struct GradCheckEntry {
  Matrix* param = nullptr;
  const Matrix* analytic = nullptr;
};

// Compares analytic gradients against central finite differences of `loss`
// (which must recompute the scalar from the current parameter values).
// Returns max over all entries of |analytic - numeric| divided by
// max(|analytic|, |numeric|, 1e-12). h must lie in [1e-7, 1e-3].
double grad_check(const std::function<double()>& loss, const std::vector<GradCheckEntry>& entries,
                  double h);

}  // namespace cisskip
