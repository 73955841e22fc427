#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmc/error.hpp"

namespace gmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Samples are rows; row-major so a sample is contiguous in memory.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Label = std::uint32_t;

/// N x D matrix of embedding vectors with optional dense class labels.
/// Immutable after construction. Use validate_batch() to check invariants.
class FeatureBatch {
 public:
  FeatureBatch() = default;
  explicit FeatureBatch(RowMatrix data, std::optional<std::vector<Label>> labels = std::nullopt)
      : data_(std::move(data)), labels_(std::move(labels)) {}

  const RowMatrix& data() const noexcept { return data_; }
  const std::optional<std::vector<Label>>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return labels_.has_value(); }

  Eigen::Index size() const noexcept { return data_.rows(); }
  Eigen::Index dim() const noexcept { return data_.cols(); }

  /// Number of distinct label values present; 0 when unlabeled.
  std::size_t class_count() const {
    if (!labels_) return 0;
    return std::set<Label>(labels_->begin(), labels_->end()).size();
  }

  friend bool operator==(const FeatureBatch& a, const FeatureBatch& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_ && a.labels_ == b.labels_;
  }

 private:
  RowMatrix data_;
  std::optional<std::vector<Label>> labels_;
};

/// Returns the batch unchanged when every invariant holds.
inline const FeatureBatch& validate_batch(const FeatureBatch& batch) {
  if (batch.size() < 1 || batch.dim() < 1) {
    fail(ErrorCode::EmptyBatch, "feature batch has no samples or no dimensions");
  }
  const auto& data = batch.data();
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (!std::isfinite(data(i, j))) {
        fail(ErrorCode::NonFinite, "non-finite entry at row " + std::to_string(i) +
                                       ", column " + std::to_string(j));
      }
    }
  }
  if (batch.labels() && static_cast<Eigen::Index>(batch.labels()->size()) != batch.size()) {
    fail(ErrorCode::LabelMismatch, "batch has " + std::to_string(batch.size()) + " rows but " +
                                       std::to_string(batch.labels()->size()) + " labels");
  }
  return batch;
}

/// (mean, covariance) of one generation; the Frechet distance operand.
struct GaussianSummary {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// One generation of diagnostics. fid_local is absent at n = 0 and
/// sigma_intra is absent for unlabeled batches.
struct TraceRow {
  int generation = 0;
  std::optional<double> fid_local;
  double fid_cumulative = 0.0;
  std::optional<double> sigma_intra;
  double m_lb = 0.0;
  double pr_g = 0.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// Per-generation metric records with generation indices 0, 1, 2, ...
class MetricTrace {
 public:
  MetricTrace() = default;
  explicit MetricTrace(std::vector<TraceRow> rows) {
    for (auto& row : rows) append(std::move(row));
  }

  void append(TraceRow row) {
    const int expected = static_cast<int>(rows_.size());
    if (row.generation != expected) {
      fail(ErrorCode::InvalidArgument, "trace row has generation " +
                                           std::to_string(row.generation) + ", expected " +
                                           std::to_string(expected));
    }
    if (expected == 0 && row.fid_cumulative != 0.0) {
      fail(ErrorCode::InvalidArgument, "cumulative drift at generation 0 must be 0");
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<TraceRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const TraceRow& operator[](std::size_t i) const { return rows_[i]; }
  const TraceRow& back() const { return rows_.back(); }

  friend bool operator==(const MetricTrace&, const MetricTrace&) = default;

 private:
  std::vector<TraceRow> rows_;
};

/// A (generation, value) sample of a curve or metric series.
struct SeriesPoint {
  int n = 0;
  double value = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};
using Series = std::vector<SeriesPoint>;

enum class PhaseLabel { ActiveTransient, SlowTransient, Stationary };

constexpr std::string_view to_string(PhaseLabel phase) {
  switch (phase) {
    case PhaseLabel::ActiveTransient: return "ActiveTransient";
    case PhaseLabel::SlowTransient: return "SlowTransient";
    case PhaseLabel::Stationary: return "Stationary";
  }
  return "?";
}

inline std::optional<PhaseLabel> parse_phase(std::string_view s) {
  for (auto p : {PhaseLabel::ActiveTransient, PhaseLabel::SlowTransient, PhaseLabel::Stationary}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

struct PhasePoint {
  int n = 0;
  PhaseLabel label = PhaseLabel::ActiveTransient;

  friend bool operator==(const PhasePoint&, const PhasePoint&) = default;
};

// Coherent/Wrinkled/Anisotropic/Oblate x Expansion/Contraction, plus the
// dead-zone label for windows where any metric has no clear direction.
enum class DimensionalPattern { CE, WE, AE, OE, CC, AC, WC, OC, Flat };

constexpr std::string_view to_string(DimensionalPattern p) {
  switch (p) {
    case DimensionalPattern::CE: return "CE";
    case DimensionalPattern::WE: return "WE";
    case DimensionalPattern::AE: return "AE";
    case DimensionalPattern::OE: return "OE";
    case DimensionalPattern::CC: return "CC";
    case DimensionalPattern::AC: return "AC";
    case DimensionalPattern::WC: return "WC";
    case DimensionalPattern::OC: return "OC";
    case DimensionalPattern::Flat: return "Flat";
  }
  return "?";
}

constexpr std::string_view long_name(DimensionalPattern p) {
  switch (p) {
    case DimensionalPattern::CE: return "Coherent Expansion";
    case DimensionalPattern::WE: return "Wrinkled Expansion";
    case DimensionalPattern::AE: return "Anisotropic Expansion";
    case DimensionalPattern::OE: return "Oblate Expansion";
    case DimensionalPattern::CC: return "Coherent Contraction";
    case DimensionalPattern::AC: return "Anisotropic Contraction";
    case DimensionalPattern::WC: return "Wrinkled Contraction";
    case DimensionalPattern::OC: return "Oblate Contraction";
    case DimensionalPattern::Flat: return "Flat";
  }
  return "?";
}

enum class Direction { Up, Down, Flat };

constexpr std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Up: return "Up";
    case Direction::Down: return "Down";
    case Direction::Flat: return "Flat";
  }
  return "?";
}

/// Direction of a metric over a window; slope is in max-normalized units per generation.
struct Trend {
  Direction direction = Direction::Flat;
  double slope = 0.0;

  friend bool operator==(const Trend&, const Trend&) = default;
};

}  // namespace gmc
