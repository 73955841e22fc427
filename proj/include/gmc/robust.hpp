#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/error.hpp"

namespace gmc {

/// Median of the pairwise slopes (y_j - y_i) / (x_j - x_i), i < j.
/// Even pair counts average the two middle slopes.
inline double theil_sen_slope(std::span<const SeriesPoint> points) {
  if (points.size() < 2) {
    fail(ErrorCode::InvalidArgument, "Theil-Sen slope needs at least two points");
  }
  std::vector<double> slopes;
  slopes.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dx = static_cast<double>(points[j].n - points[i].n);
      if (dx == 0.0) continue;
      slopes.push_back((points[j].value - points[i].value) / dx);
    }
  }
  if (slopes.empty()) {
    fail(ErrorCode::InvalidArgument, "Theil-Sen slope needs distinct abscissae");
  }
  const std::size_t mid = slopes.size() / 2;
  std::nth_element(slopes.begin(), slopes.begin() + static_cast<std::ptrdiff_t>(mid), slopes.end());
  const double upper = slopes[mid];
  if (slopes.size() % 2 == 1) return upper;
  const double lower =
      *std::max_element(slopes.begin(), slopes.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// Divides every value by the largest magnitude in the series; an all-zero
/// series stays all-zero.
inline Series max_normalize(const Series& series) {
  double largest = 0.0;
  for (const auto& p : series) largest = std::max(largest, std::abs(p.value));
  Series out = series;
  if (largest > 0.0) {
    for (auto& p : out) p.value /= largest;
  }
  return out;
}

}  // namespace gmc
