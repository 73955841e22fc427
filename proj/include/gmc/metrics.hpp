#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/linalg.hpp"

namespace gmc {

enum class PrScope { Global };

struct MetricConfig {
  /// Neighbor count k of the Levina-Bickel estimator.
  int k_neighbors = 10;
  PrScope pr_scope = PrScope::Global;
  /// When > 0 and the batch is larger, m_LB is estimated on this many rows
  /// taken at an even stride. 0 means every row (exact).
  int lb_max_points = 0;
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the trace of
/// the square root taken as Tr((sqrt(S_a) S_b sqrt(S_a))^(1/2)).
inline double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim() != b.dim() || a.covariance.rows() != a.dim() || b.covariance.rows() != b.dim()) {
    fail(ErrorCode::DimensionMismatch, "summaries have dimensions " + std::to_string(a.dim()) +
                                           " and " + std::to_string(b.dim()));
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Matrix root_a = sqrtm_psd(a.covariance);
  Matrix middle = root_a * b.covariance * root_a;
  middle = 0.5 * (middle + middle.transpose());
  const double cross = sqrtm_psd(middle).trace();
  const double scale = a.covariance.trace() + b.covariance.trace();
  double trace_term = scale - 2.0 * cross;
  // Cancellation leaves O(eps * scale) residue for (near-)identical covariances.
  if (std::abs(trace_term) <= 1e-10 * scale) trace_term = 0.0;
  if (trace_term < 0.0) {
    if (-trace_term > 1e-8 * std::max(scale, 1.0)) {
      fail(ErrorCode::DecompositionFailure,
           "covariance trace term is negative beyond rounding: " + std::to_string(trace_term));
    }
    trace_term = 0.0;
  }
  return mean_term + trace_term;
}

/// Mean over classes of the RMS Euclidean deviation from the class centroid.
/// Classes are the distinct labels present and are weighted equally.
inline double sigma_intra(const FeatureBatch& batch, const MetricConfig& = {}) {
  if (!batch.labels()) fail(ErrorCode::MissingLabels, "sigma_intra requires class labels");
  validate_batch(batch);
  const auto& labels = *batch.labels();
  const auto& data = batch.data();

  std::map<Label, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < batch.size(); ++i) members[labels[static_cast<std::size_t>(i)]].push_back(i);

  double total = 0.0;
  for (const auto& [label, rows] : members) {
    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(batch.dim());
    for (auto r : rows) centroid += data.row(r);
    centroid /= static_cast<double>(rows.size());
    double sq = 0.0;
    for (auto r : rows) sq += (data.row(r) - centroid).squaredNorm();
    total += std::sqrt(sq / static_cast<double>(rows.size()));
  }
  return total / static_cast<double>(members.size());
}

namespace detail {

// Sorted distances from row i to its k nearest other rows (exact brute force).
inline void nearest_distances(const RowMatrix& data, Eigen::Index i, int k, std::vector<double>& best) {
  best.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  const auto xi = data.row(i);
  for (Eigen::Index j = 0; j < data.rows(); ++j) {
    if (j == i) continue;
    const double d2 = (data.row(j) - xi).squaredNorm();
    if (d2 >= best.back()) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), d2);
    std::move_backward(pos, best.end() - 1, best.end());
    *pos = d2;
  }
  for (auto& d : best) d = std::sqrt(d);
}

inline RowMatrix strided_rows(const RowMatrix& data, int max_points) {
  const Eigen::Index n = data.rows();
  if (max_points <= 0 || n <= max_points) return data;
  RowMatrix out(max_points, data.cols());
  for (Eigen::Index i = 0; i < max_points; ++i) out.row(i) = data.row(i * n / max_points);
  return out;
}

}  // namespace detail

/// Levina-Bickel maximum-likelihood intrinsic dimension: the mean over points
/// of [ (1/(k-1)) sum_{j<k} ln(T_k / T_j) ]^-1.
inline double levina_bickel(const FeatureBatch& batch, const MetricConfig& config = {}) {
  const int k = config.k_neighbors;
  if (k < 2) fail(ErrorCode::InvalidArgument, "k_neighbors must be at least 2");
  validate_batch(batch);
  const RowMatrix data = detail::strided_rows(batch.data(), config.lb_max_points);
  const Eigen::Index n = data.rows();
  if (n < k + 1) {
    fail(ErrorCode::TooFewSamples, "m_LB needs at least k+1 = " + std::to_string(k + 1) +
                                       " samples, got " + std::to_string(n));
  }
  std::vector<double> dist;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    detail::nearest_distances(data, i, k, dist);
    if (dist.front() == 0.0) {
      fail(ErrorCode::DegenerateNeighborhood,
           "sample " + std::to_string(i) + " has a duplicate among its nearest neighbors");
    }
    const double tk = dist.back();
    double log_sum = 0.0;
    for (int j = 0; j + 1 < k; ++j) log_sum += std::log(tk / dist[static_cast<std::size_t>(j)]);
    if (!(log_sum > 0.0)) {
      fail(ErrorCode::DegenerateNeighborhood,
           "sample " + std::to_string(i) + " has all k nearest neighbors equidistant");
    }
    total += static_cast<double>(k - 1) / log_sum;
  }
  return total / static_cast<double>(n);
}

/// (sum lambda)^2 / sum lambda^2 of a covariance spectrum, negative
/// eigenvalues clamped to 0.
inline double spectrum_participation_ratio(const Matrix& covariance) {
  const SpectralDecomposition eig = decompose_symmetric(covariance);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    const double lambda = std::max(eig.eigenvalues(i), 0.0);
    sum += lambda;
    sum_sq += lambda * lambda;
  }
  if (sum_sq == 0.0) fail(ErrorCode::ZeroVariance, "participation ratio of a zero-variance spectrum");
  return sum * sum / sum_sq;
}

/// Global participation ratio over the raw (un-ridged) sample covariance.
inline double participation_ratio(const FeatureBatch& batch) {
  validate_batch(batch);
  if (batch.size() < 2) {
    fail(ErrorCode::TooFewSamples, "participation ratio needs at least 2 samples");
  }
  return spectrum_participation_ratio(sample_covariance(batch.data()));
}

/// Metrics of generation n given precomputed Gaussian summaries.
inline TraceRow compute_trace_row(int generation, const FeatureBatch& batch,
                                  const GaussianSummary& summary,
                                  const GaussianSummary* previous, const GaussianSummary& initial,
                                  const MetricConfig& config) {
  auto tagged = [](const char* metric, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw e.with_context(metric);
    }
  };
  if (summary.dim() != initial.dim() || (previous && previous->dim() != summary.dim())) {
    fail(ErrorCode::DimensionMismatch, "generation batches differ in dimension");
  }
  TraceRow row;
  row.generation = generation;
  if (previous) {
    row.fid_local = tagged("fid_local", [&] { return frechet_distance(summary, *previous); });
  }
  row.fid_cumulative =
      generation == 0 ? 0.0
                      : tagged("fid_cumulative", [&] { return frechet_distance(summary, initial); });
  if (batch.has_labels()) {
    row.sigma_intra = tagged("sigma_intra", [&] { return sigma_intra(batch, config); });
  }
  row.m_lb = tagged("m_lb", [&] { return levina_bickel(batch, config); });
  row.pr_g = tagged("pr_g", [&] { return participation_ratio(batch); });
  return row;
}

/// Bundles the four metrics plus both drifts for one generation.
inline TraceRow compute_trace_row(int generation, const FeatureBatch& batch,
                                  const FeatureBatch* previous, const FeatureBatch& initial,
                                  const MetricConfig& config) {
  const GaussianSummary summary = estimate_gaussian(validate_batch(batch));
  const GaussianSummary initial_summary = estimate_gaussian(validate_batch(initial));
  std::optional<GaussianSummary> previous_summary;
  if (previous) previous_summary = estimate_gaussian(validate_batch(*previous));
  return compute_trace_row(generation, batch, summary,
                           previous_summary ? &*previous_summary : nullptr, initial_summary,
                           config);
}

}  // namespace gmc
