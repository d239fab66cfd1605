#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sphgal {

/// Least-squares slope of log(error) against log(h) and the RMS deviation of
/// the fit, for (h, error) pairs. Errors must be positive.
inline std::pair<double, double> fit_rate(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 points");
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [h, err] : pts) {
    if (!(err > 0.0)) throw std::invalid_argument("fit_rate: nonpositive error");
    if (!(h > 0.0)) throw std::invalid_argument("fit_rate: nonpositive h");
    const double x = std::log(h), y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissas");
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss = 0;
  for (const auto& [h, err] : pts) {
    const double d = std::log(err) - (slope * std::log(h) + intercept);
    ss += d * d;
  }
  return {slope, std::sqrt(ss / n)};
}

}  // namespace sphgal
