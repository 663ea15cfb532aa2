#pragma once

// Central finite differences for double-precision gradient checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace msnerf::test {

inline double central_difference(const std::function<double(double)>& f, double x0,
                                 double h = 1e-6) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
// dominating; it never hides a difference.
inline double relative_error(double a, double b, double floor = 1e-9) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Worst relative_error over a group, with the floor set to 1e-6 of the
// group's largest analytic magnitude.
inline double worst_relative_error(const std::vector<double>& analytic,
                                   const std::vector<double>& numeric) {
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-6 * scale, 1e-15);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

}  // namespace msnerf::test
