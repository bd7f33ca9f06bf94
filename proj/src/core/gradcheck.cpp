#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace cisskip {

double grad_check(const std::function<double()>& loss, const std::vector<GradCheckEntry>& entries,
                  double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw RangeError("grad_check: step " + std::to_string(h) + " outside [1e-7, 1e-3]");
  }
  double worst = 0.0;
  for (const GradCheckEntry& e : entries) {
    if (!e.param || !e.analytic) throw StateError("grad_check: null entry");
    if (!e.param->same_shape(*e.analytic)) {
      throw ShapeError("grad_check: gradient " + e.analytic->shape_str() +
                       " does not match parameter " + e.param->shape_str());
    }
    for (size_t i = 0; i < e.param->size(); ++i) {
      double& w = e.param->values()[i];
      const double orig = w;
      w = orig + h;
      double up = loss();
      w = orig - h;
      double down = loss();
      w = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss during finite differencing");
      }
      double numeric = (up - down) / (2.0 * h);
      double analytic = e.analytic->values()[i];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace cisskip
