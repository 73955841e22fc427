#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/robust.hpp"

namespace gmc {

struct TrendConfig {
  int window = 7;
  /// Dead zone on the Theil-Sen slope of the max-normalized series.
  double theta_slope = 0.01;
};

inline Direction direction_of(double slope, double theta) {
  if (slope > theta) return Direction::Up;
  if (slope < -theta) return Direction::Down;
  return Direction::Flat;
}

/// Windowed trends of a series, one per generation that ends a full trailing
/// window. The series is max-normalized first.
inline std::vector<std::pair<int, Trend>> trend(const Series& series, const TrendConfig& config = {}) {
  if (config.window < 3) fail(ErrorCode::InvalidArgument, "trend window must be at least 3");
  if (!(config.theta_slope > 0.0)) fail(ErrorCode::InvalidArgument, "theta_slope must be positive");
  if (static_cast<int>(series.size()) < config.window) {
    fail(ErrorCode::WindowTooLarge, "trend window " + std::to_string(config.window) +
                                        " exceeds series length " + std::to_string(series.size()));
  }
  const Series normalized = max_normalize(series);
  std::vector<std::pair<int, Trend>> out;
  const std::size_t w = static_cast<std::size_t>(config.window);
  for (std::size_t end = w - 1; end < normalized.size(); ++end) {
    const std::span<const SeriesPoint> window(normalized.data() + (end + 1 - w), w);
    const double slope = theil_sen_slope(window);
    out.push_back({normalized[end].n, Trend{direction_of(slope, config.theta_slope), slope}});
  }
  return out;
}

/// Sign-triple lookup of (sigma_intra, m_LB, PR_G) directions; any Flat gives Flat.
constexpr DimensionalPattern classify_pattern(Direction sigma, Direction mlb, Direction pr) {
  using enum Direction;
  using P = DimensionalPattern;
  if (sigma == Flat || mlb == Flat || pr == Flat) return P::Flat;
  if (sigma == Up) {
    if (mlb == Up) return pr == Up ? P::CE : P::WE;
    return pr == Up ? P::AE : P::OE;
  }
  if (mlb == Down) return pr == Down ? P::CC : P::AC;
  return pr == Down ? P::WC : P::OC;
}

constexpr DimensionalPattern classify_pattern(const Trend& sigma, const Trend& mlb, const Trend& pr) {
  return classify_pattern(sigma.direction, mlb.direction, pr.direction);
}

/// The pattern with every direction reversed (CE<->CC, WE<->AC, AE<->WC, OE<->OC).
constexpr DimensionalPattern antipattern(DimensionalPattern p) {
  using P = DimensionalPattern;
  switch (p) {
    case P::CE: return P::CC;
    case P::CC: return P::CE;
    case P::WE: return P::AC;
    case P::AC: return P::WE;
    case P::AE: return P::WC;
    case P::WC: return P::AE;
    case P::OE: return P::OC;
    case P::OC: return P::OE;
    case P::Flat: return P::Flat;
  }
  return P::Flat;
}

inline std::optional<DimensionalPattern> parse_pattern(std::string_view s) {
  using P = DimensionalPattern;
  for (auto p : {P::CE, P::WE, P::AE, P::OE, P::CC, P::AC, P::WC, P::OC, P::Flat}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

/// Generations [start, end) sharing one pattern. `trends` are the Theil-Sen
/// trends of each metric over the points the segment's windows span.
struct PatternSegment {
  int start = 0;
  int end = 0;
  DimensionalPattern pattern = DimensionalPattern::Flat;
  Trend sigma_intra;
  Trend m_lb;
  Trend pr_g;
};

/// Standard deviation of the windowed slopes of each metric.
struct TrendVolatility {
  double sigma_intra = 0.0;
  double m_lb = 0.0;
  double pr_g = 0.0;
};

struct MetricSeries {
  Series sigma_intra;
  Series m_lb;
  Series pr_g;
};

inline MetricSeries metric_series(const MetricTrace& trace) {
  MetricSeries out;
  for (const auto& row : trace.rows()) {
    if (!row.sigma_intra) {
      fail(ErrorCode::MissingMetric,
           "generation " + std::to_string(row.generation) + " has no sigma_intra");
    }
    out.sigma_intra.push_back({row.generation, *row.sigma_intra});
    out.m_lb.push_back({row.generation, row.m_lb});
    out.pr_g.push_back({row.generation, row.pr_g});
  }
  return out;
}

namespace detail {

inline Trend span_trend(const Series& normalized, int first, int last, double theta) {
  Series pts;
  for (const auto& p : normalized) {
    if (p.n >= first && p.n <= last) pts.push_back(p);
  }
  const double slope = theil_sen_slope(pts);
  return Trend{direction_of(slope, theta), slope};
}

inline double stddev_of_slopes(const std::vector<std::pair<int, Trend>>& trends) {
  if (trends.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& [n, t] : trends) mean += t.slope;
  mean /= static_cast<double>(trends.size());
  double var = 0.0;
  for (const auto& [n, t] : trends) var += (t.slope - mean) * (t.slope - mean);
  return std::sqrt(var / static_cast<double>(trends.size()));
}

}  // namespace detail

inline TrendVolatility trend_volatility(const MetricTrace& trace, const TrendConfig& config = {}) {
  const MetricSeries s = metric_series(trace);
  if (static_cast<int>(trace.size()) < config.window) {
    fail(ErrorCode::TraceTooShort, "trace shorter than the trend window");
  }
  return {detail::stddev_of_slopes(trend(s.sigma_intra, config)),
          detail::stddev_of_slopes(trend(s.m_lb, config)),
          detail::stddev_of_slopes(trend(s.pr_g, config))};
}

/// Per-generation patterns from the three metric trends, run-length merged.
/// Flat runs shorter than the window are absorbed into the preceding segment
/// (or the following one when the trace starts flat). Covers generations
/// [window-1, last] with half-open segments.
inline std::vector<PatternSegment> segment_patterns(const MetricTrace& trace, const TrendConfig& config = {}) {
  if (static_cast<int>(trace.size()) < config.window) {
    fail(ErrorCode::TraceTooShort, "trace has " + std::to_string(trace.size()) +
                                       " generations, trend window is " +
                                       std::to_string(config.window));
  }
  const MetricSeries s = metric_series(trace);
  const auto ts = trend(s.sigma_intra, config);
  const auto tm = trend(s.m_lb, config);
  const auto tp = trend(s.pr_g, config);

  struct Run {
    int start;
    int end;
    DimensionalPattern pattern;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int n = ts[i].first;
    const auto p = classify_pattern(ts[i].second, tm[i].second, tp[i].second);
    if (!runs.empty() && runs.back().pattern == p) {
      runs.back().end = n + 1;
    } else {
      runs.push_back({n, n + 1, p});
    }
  }

  auto merge_equal = [](std::vector<Run>& rs) {
    std::vector<Run> merged;
    for (const auto& r : rs) {
      if (!merged.empty() && merged.back().pattern == r.pattern) {
        merged.back().end = r.end;
      } else {
        merged.push_back(r);
      }
    }
    rs = std::move(merged);
  };

  // Hysteresis: short Flat runs inherit a neighbouring pattern.
  std::vector<Run> kept;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Run& r = runs[i];
    const bool short_flat =
        r.pattern == DimensionalPattern::Flat && (r.end - r.start) < config.window;
    if (short_flat && !kept.empty()) {
      kept.back().end = r.end;
    } else if (short_flat && i + 1 < runs.size()) {
      runs[i + 1].start = r.start;
    } else {
      kept.push_back(r);
    }
    merge_equal(kept);
  }

  const Series ns = max_normalize(s.sigma_intra);
  const Series nm = max_normalize(s.m_lb);
  const Series np = max_normalize(s.pr_g);
  std::vector<PatternSegment> out;
  for (const auto& r : kept) {
    const int first = r.start - config.window + 1;
    const int last = r.end - 1;
    out.push_back({r.start, r.end, r.pattern,
                   detail::span_trend(ns, first, last, config.theta_slope),
                   detail::span_trend(nm, first, last, config.theta_slope),
                   detail::span_trend(np, first, last, config.theta_slope)});
  }
  return out;
}

}  // namespace gmc
