#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/metrics.hpp"
#include "gmc/robust.hpp"

namespace gmc {

/// local: (n, FID(S_n, S_{n-1})) for n >= 1; cumulative: (n, FID(S_n, S_0)) for n >= 0.
struct DriftCurves {
  Series local;
  Series cumulative;
};

struct PhaseConfig {
  int window = 5;
  /// Thresholds on |Theil-Sen slope| of the max-normalized curves, per generation.
  double slope_active = 0.05;
  double slope_flat = 0.01;
};

inline void check(const PhaseConfig& config) {
  if (config.window < 3) fail(ErrorCode::InvalidArgument, "phase window must be at least 3");
  if (!(config.slope_flat > 0.0 && config.slope_flat < config.slope_active)) {
    fail(ErrorCode::InvalidArgument, "phase thresholds need 0 < slope_flat < slope_active");
  }
}

inline DriftCurves drift_curves(std::span<const GaussianSummary> summaries) {
  if (summaries.size() < 2) {
    fail(ErrorCode::TooFewGenerations, "drift curves need at least 2 generations");
  }
  DriftCurves out;
  out.cumulative.push_back({0, 0.0});
  for (std::size_t n = 1; n < summaries.size(); ++n) {
    const int gen = static_cast<int>(n);
    out.local.push_back({gen, frechet_distance(summaries[n], summaries[n - 1])});
    out.cumulative.push_back({gen, frechet_distance(summaries[n], summaries[0])});
  }
  return out;
}

/// Rebuilds the drift curves stored in a trace.
inline DriftCurves drift_curves(const MetricTrace& trace) {
  DriftCurves out;
  for (const auto& row : trace.rows()) {
    if (row.fid_local) out.local.push_back({row.generation, *row.fid_local});
    out.cumulative.push_back({row.generation, row.fid_cumulative});
  }
  return out;
}

namespace detail {

inline std::optional<double> value_at(const Series& series, int n) {
  // Curves are dense in n, so try the direct offset first.
  if (!series.empty()) {
    const long offset = static_cast<long>(n) - series.front().n;
    if (offset >= 0 && offset < static_cast<long>(series.size()) &&
        series[static_cast<std::size_t>(offset)].n == n) {
      return series[static_cast<std::size_t>(offset)].value;
    }
  }
  for (const auto& p : series) {
    if (p.n == n) return p.value;
  }
  return std::nullopt;
}

inline std::optional<double> window_slope(const Series& normalized, int end, int window) {
  Series pts;
  pts.reserve(static_cast<std::size_t>(window));
  for (int n = end - window + 1; n <= end; ++n) {
    auto v = value_at(normalized, n);
    if (!v) return std::nullopt;
    pts.push_back({n, *v});
  }
  return theil_sen_slope(pts);
}

}  // namespace detail

/// Labels every generation n that ends a full trailing window on both curves:
/// both |slopes| >= slope_active -> ActiveTransient, both <= slope_flat ->
/// Stationary, anything else -> SlowTransient.
inline std::vector<PhasePoint> classify_phases(const DriftCurves& curves, const PhaseConfig& config = {}) {
  check(config);
  const Series local = max_normalize(curves.local);
  const Series cumulative = max_normalize(curves.cumulative);
  std::vector<PhasePoint> out;
  if (local.empty() || cumulative.empty()) {
    fail(ErrorCode::WindowTooLarge, "drift curves are empty");
  }
  const int first = std::max(local.front().n, cumulative.front().n) + config.window - 1;
  const int last = std::min(local.back().n, cumulative.back().n);
  if (first > last) {
    fail(ErrorCode::WindowTooLarge, "phase window " + std::to_string(config.window) +
                                        " exceeds the curve length");
  }
  for (int n = first; n <= last; ++n) {
    const auto sl = detail::window_slope(local, n, config.window);
    const auto sc = detail::window_slope(cumulative, n, config.window);
    if (!sl || !sc) continue;
    const double a = std::abs(*sl);
    const double b = std::abs(*sc);
    PhaseLabel label = PhaseLabel::SlowTransient;
    if (a >= config.slope_active && b >= config.slope_active) {
      label = PhaseLabel::ActiveTransient;
    } else if (a <= config.slope_flat && b <= config.slope_flat) {
      label = PhaseLabel::Stationary;
    }
    out.push_back({n, label});
  }
  return out;
}

/// First n from which every later label is Stationary.
inline std::optional<int> stationarity_onset(std::span<const PhasePoint> phases) {
  std::optional<int> onset;
  for (auto it = phases.rbegin(); it != phases.rend(); ++it) {
    if (it->label != PhaseLabel::Stationary) break;
    onset = it->n;
  }
  return onset;
}

}  // namespace gmc
