#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/linalg.hpp"
#include "gmc/metrics.hpp"
#include "gmc/random.hpp"
#include "gmc/signal.hpp"
#include "gmc/taxonomy.hpp"

namespace gmc {

/// x' = A x + b + sigma * noise.
struct LinearGaussianParams {
  Matrix transition;
  Vector offset;
  double noise_sigma = 1.0;
};

/// x' = M (F x) + sigma * noise, with F the r x D feature map and M the D x r decoder.
struct LatentFeedbackParams {
  Matrix feature_map;
  Matrix decoder;
  double noise_sigma = 1.0;
};

/// Each row is a signal: x' = rms_normalize((x * h)[0:signal_len]).
struct ConvolutionParams {
  Vector impulse_response;
  int signal_len = 0;
  double norm_target = 1.0;
};

/// Componentwise center + amplitude * tanh(steepness * (x - center)).
/// With amplitude * steepness > 1 each coordinate has two stable fixed points
/// on either side of the center.
struct SaturatingMap {
  Vector center;
  double amplitude = 1.0;
  double steepness = 1.0;

  Vector operator()(const Vector& x) const {
    return center.array() + amplitude * (steepness * (x - center).array()).tanh();
  }
};

enum class CycleStart { DomainA, DomainB };

/// Domain A: x' = f_ba(f_ab(x)); domain B: x' = f_ab(f_ba(x)).
struct CycleMapParams {
  SaturatingMap ab;
  SaturatingMap ba;
  CycleStart start = CycleStart::DomainA;
};

/// Reverse DDPM sampler with the exact noise predictor of a Gaussian target.
struct DdpmParams {
  std::vector<double> betas;
  GaussianSummary target;
  /// Replace the target mean by the incoming batch mean.
  bool condition_on_input = false;

  static DdpmParams linear_schedule(int steps, GaussianSummary target, double beta_start = 1e-4,
                                    double beta_end = 0.02) {
    if (steps < 1) fail(ErrorCode::InvalidArgument, "DDPM needs at least one step");
    DdpmParams p;
    p.target = std::move(target);
    p.betas.resize(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
      p.betas[static_cast<std::size_t>(t)] = beta_start + frac * (beta_end - beta_start);
    }
    return p;
  }
};

enum class OperatorKind { LinearGaussian, LatentFeedback, Convolution, CycleMap, DdpmAnalytic };

constexpr std::string_view to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::LinearGaussian: return "LinearGaussian";
    case OperatorKind::LatentFeedback: return "LatentFeedback";
    case OperatorKind::Convolution: return "Convolution";
    case OperatorKind::CycleMap: return "CycleMap";
    case OperatorKind::DdpmAnalytic: return "DdpmAnalytic";
  }
  return "?";
}

/// The transition rule producing generation n+1 from generation n.
struct ChainOperator {
  std::variant<LinearGaussianParams, LatentFeedbackParams, ConvolutionParams, CycleMapParams,
               DdpmParams>
      params;
  std::uint64_t rng_seed = 0;

  OperatorKind kind() const { return static_cast<OperatorKind>(params.index()); }

  Eigen::Index dim() const {
    return std::visit(
        [](const auto& p) -> Eigen::Index {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, LinearGaussianParams>) return p.transition.rows();
          if constexpr (std::is_same_v<P, LatentFeedbackParams>) return p.decoder.rows();
          if constexpr (std::is_same_v<P, ConvolutionParams>) return p.signal_len;
          if constexpr (std::is_same_v<P, CycleMapParams>) return p.ab.center.size();
          if constexpr (std::is_same_v<P, DdpmParams>) return p.target.dim();
        },
        params);
  }
};

/// Checks per-kind preconditions. Hard violations throw; soft ones (a
/// transition that is not contracting) are returned as warnings.
inline std::vector<std::string> check_operator(const ChainOperator& op) {
  std::vector<std::string> warnings;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LinearGaussianParams>) {
          if (p.transition.rows() != p.transition.cols() || p.offset.size() != p.transition.rows()) {
            fail(ErrorCode::DimensionMismatch, "linear Gaussian A must be D x D and b length D");
          }
          if (!(p.noise_sigma > 0.0)) fail(ErrorCode::InvalidArgument, "noise_sigma must be positive");
          if (spectral_radius(p.transition) >= 1.0) {
            warnings.push_back("spectral radius of A is >= 1; the chain has no stationary law");
          }
        } else if constexpr (std::is_same_v<P, LatentFeedbackParams>) {
          const auto r = p.feature_map.rows();
          const auto d = p.feature_map.cols();
          if (p.decoder.rows() != d || p.decoder.cols() != r) {
            fail(ErrorCode::DimensionMismatch, "latent feedback needs F: r x D and M: D x r");
          }
          if (r > d) fail(ErrorCode::InvalidArgument, "latent rank r exceeds D");
          if (!(p.noise_sigma > 0.0)) fail(ErrorCode::InvalidArgument, "noise_sigma must be positive");
          if (spectral_radius(p.decoder * p.feature_map) >= 1.0) {
            warnings.push_back("spectral radius of M F is >= 1; the chain has no stationary law");
          }
        } else if constexpr (std::is_same_v<P, ConvolutionParams>) {
          if (p.signal_len < 1) fail(ErrorCode::InvalidArgument, "signal_len must be positive");
          if (p.impulse_response.size() == 0 || p.impulse_response.isZero(0.0)) {
            fail(ErrorCode::InvalidArgument, "impulse response is empty or all zero");
          }
          if (!(p.norm_target > 0.0)) fail(ErrorCode::InvalidArgument, "norm_target must be positive");
        } else if constexpr (std::is_same_v<P, CycleMapParams>) {
          if (p.ab.center.size() != p.ba.center.size() || p.ab.center.size() == 0) {
            fail(ErrorCode::DimensionMismatch, "cycle maps must share a nonzero dimension");
          }
        } else if constexpr (std::is_same_v<P, DdpmParams>) {
          if (p.betas.empty()) fail(ErrorCode::InvalidArgument, "DDPM needs at least one step");
          for (double b : p.betas) {
            if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::InvalidArgument, "DDPM betas must lie in (0, 1)");
          }
          if (p.target.covariance.rows() != p.target.dim() || p.target.dim() == 0) {
            fail(ErrorCode::DimensionMismatch, "DDPM target covariance must be D x D");
          }
        }
      },
      op.params);
  return warnings;
}

/// Runs the reverse loop from x_T (rows are samples). Noise is injected at
/// every step t > 1 with sigma_t^2 = beta_t.
inline RowMatrix ddpm_sample(const DdpmParams& p, RowMatrix x, Engine& rng,
                             const std::optional<Vector>& mean_override = std::nullopt) {
  const Eigen::Index d = p.target.dim();
  if (x.cols() != d) fail(ErrorCode::DimensionMismatch, "x_T dimension differs from the DDPM target");
  const Vector mu = mean_override ? *mean_override : p.target.mean;
  const Matrix identity = Matrix::Identity(d, d);
  const std::size_t steps = p.betas.size();

  std::vector<double> alpha_bar(steps);
  double running = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    running *= 1.0 - p.betas[t];
    alpha_bar[t] = running;
  }
  for (std::size_t t = steps; t-- > 0;) {
    const double beta = p.betas[t];
    const double alpha = 1.0 - beta;
    const double ab = alpha_bar[t];
    const Matrix marginal_cov = ab * p.target.covariance + (1.0 - ab) * identity;
    const Matrix precision = marginal_cov.ldlt().solve(identity);
    const Eigen::RowVectorXd shift = (std::sqrt(ab) * mu).transpose();
    // eps* = sqrt(1 - ab) * precision * (x - sqrt(ab) mu); precision is symmetric.
    const RowMatrix eps = std::sqrt(1.0 - ab) * ((x.rowwise() - shift) * precision);
    x = (x - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(alpha);
    if (t > 0) x += std::sqrt(beta) * standard_normal(rng, x.rows(), d);
  }
  return x;
}

/// Iterates the cycle composition from x until it moves less than `tol`.
inline Vector cycle_limit(const CycleMapParams& p, Vector x, int max_iterations = 10000, double tol = 1e-12) {
  for (int i = 0; i < max_iterations; ++i) {
    Vector next = p.start == CycleStart::DomainA ? p.ba(p.ab(x)) : p.ab(p.ba(x));
    const double moved = (next - x).norm();
    x = std::move(next);
    if (moved < tol) return x;
  }
  fail(ErrorCode::NoConvergence, "cycle map did not settle");
}

/// One generation X_{n+1} = T(X_n). Randomness comes from the stream of
/// (op.rng_seed, trajectory, generation); labels are carried through.
inline FeatureBatch step(const ChainOperator& op, const FeatureBatch& batch, int generation = 0,
                         int trajectory = 0) {
  validate_batch(batch);
  if (batch.dim() != op.dim()) {
    fail(ErrorCode::DimensionMismatch, "batch dimension " + std::to_string(batch.dim()) +
                                           " differs from operator dimension " +
                                           std::to_string(op.dim()));
  }
  Engine rng = trajectory_engine(op.rng_seed, trajectory, generation);
  const RowMatrix& x = batch.data();
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();

  RowMatrix next = std::visit(
      [&](const auto& p) -> RowMatrix {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LinearGaussianParams>) {
          RowMatrix out = x * p.transition.transpose();
          out.rowwise() += p.offset.transpose();
          out += p.noise_sigma * standard_normal(rng, n, d);
          return out;
        } else if constexpr (std::is_same_v<P, LatentFeedbackParams>) {
          RowMatrix out = (x * p.feature_map.transpose()) * p.decoder.transpose();
          out += p.noise_sigma * standard_normal(rng, n, d);
          return out;
        } else if constexpr (std::is_same_v<P, ConvolutionParams>) {
          RowMatrix out(n, d);
          const std::span<const double> h(p.impulse_response.data(),
                                          static_cast<std::size_t>(p.impulse_response.size()));
          for (Eigen::Index i = 0; i < n; ++i) {
            const std::span<const double> row(x.row(i).data(), static_cast<std::size_t>(d));
            if (!(rms(row) > 0.0)) {
              fail(ErrorCode::ZeroSignal, "signal " + std::to_string(i) + " has RMS 0");
            }
            std::vector<double> y = fft_convolve(row, h, static_cast<std::size_t>(d));
            normalize_rms(y, p.norm_target);
            out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), d);
          }
          return out;
        } else if constexpr (std::is_same_v<P, CycleMapParams>) {
          RowMatrix out(n, d);
          for (Eigen::Index i = 0; i < n; ++i) {
            const Vector xi = x.row(i).transpose();
            const Vector y = p.start == CycleStart::DomainA ? p.ba(p.ab(xi)) : p.ab(p.ba(xi));
            out.row(i) = y.transpose();
          }
          return out;
        } else {
          RowMatrix x_t = standard_normal(rng, n, d);
          std::optional<Vector> mean;
          if (p.condition_on_input) mean = Vector(x.colwise().mean().transpose());
          return ddpm_sample(p, std::move(x_t), rng, mean);
        }
      },
      op.params);
  return FeatureBatch(std::move(next), batch.labels());
}

/// Which generation batches run_chain keeps in memory.
struct RetentionPolicy {
  enum class Mode { Auto, All, Every, SummariesOnly };
  Mode mode = Mode::Auto;
  int every = 1;

  /// Auto keeps every batch for runs of at most 64 snapshots, none beyond.
  bool keeps(int generation, int n_generations) const {
    switch (mode) {
      case Mode::Auto: return n_generations + 1 <= 64;
      case Mode::All: return true;
      case Mode::Every: return every > 0 && generation % every == 0;
      case Mode::SummariesOnly: return false;
    }
    return false;
  }
};

struct ChainOptions {
  MetricConfig metrics;
  RetentionPolicy retention;
  int trajectory = 0;
};

struct Snapshot {
  int generation = 0;
  FeatureBatch batch;
};

struct ChainRun {
  std::vector<Snapshot> snapshots;
  std::vector<GaussianSummary> summaries;
  MetricTrace trace;
  FeatureBatch final_batch;
};

namespace detail {

template <class Visit>
void advance(const ChainOperator& op, const FeatureBatch& initial, int n_generations, int trajectory,
             Visit&& visit) {
  FeatureBatch current = validate_batch(initial);
  visit(0, current);
  for (int n = 1; n <= n_generations; ++n) {
    try {
      current = step(op, current, n, trajectory);
    } catch (const Error& e) {
      throw e.with_context("generation " + std::to_string(n));
    }
    visit(n, current);
  }
}

}  // namespace detail

/// Applies `step` n_generations times, recording a metric row per generation.
inline ChainRun run_chain(const ChainOperator& op, const FeatureBatch& initial, int n_generations,
                          const ChainOptions& options = {}) {
  if (n_generations < 1) fail(ErrorCode::TooFewGenerations, "run_chain needs n_generations >= 1");
  check_operator(op);
  ChainRun run;
  detail::advance(op, initial, n_generations, options.trajectory, [&](int n, const FeatureBatch& batch) {
    run.summaries.push_back(estimate_gaussian(batch));
    const GaussianSummary* previous = n > 0 ? &run.summaries[static_cast<std::size_t>(n - 1)] : nullptr;
    try {
      run.trace.append(compute_trace_row(n, batch, run.summaries.back(), previous,
                                         run.summaries.front(), options.metrics));
    } catch (const Error& e) {
      throw e.with_context("generation " + std::to_string(n));
    }
    if (options.retention.keeps(n, n_generations)) run.snapshots.push_back({n, batch});
    if (n == n_generations) run.final_batch = batch;
  });
  return run;
}

struct ErgodicityReport {
  bool forgets_init = false;
  double initial_fid_ab = 0.0;
  double final_fid_ab = 0.0;
};

struct ProbeConfig {
  /// forgets_init when final FID < epsilon_fraction * initial FID.
  double epsilon_fraction = 0.05;
  /// Minimum FID between the two initial batches.
  double min_initial_fid = 1.0;
};

/// Runs two trajectories from different initial batches and checks whether
/// their terminal distributions coincide.
inline ErgodicityReport ergodicity_probe(const ChainOperator& op, const FeatureBatch& init_a,
                                         const FeatureBatch& init_b, int n_generations,
                                         const ProbeConfig& config = {}) {
  if (n_generations < 1) fail(ErrorCode::TooFewGenerations, "ergodicity probe needs n_generations >= 1");
  check_operator(op);
  ErgodicityReport report;
  report.initial_fid_ab = frechet_distance(estimate_gaussian(validate_batch(init_a)),
                                           estimate_gaussian(validate_batch(init_b)));
  if (report.initial_fid_ab < config.min_initial_fid) {
    fail(ErrorCode::InitsTooClose, "initial batches are only FID " +
                                       std::to_string(report.initial_fid_ab) + " apart");
  }
  FeatureBatch final_a, final_b;
  detail::advance(op, init_a, n_generations, 0, [&](int n, const FeatureBatch& b) {
    if (n == n_generations) final_a = b;
  });
  detail::advance(op, init_b, n_generations, 1, [&](int n, const FeatureBatch& b) {
    if (n == n_generations) final_b = b;
  });
  report.final_fid_ab = frechet_distance(estimate_gaussian(final_a), estimate_gaussian(final_b));
  report.forgets_init = report.final_fid_ab < config.epsilon_fraction * report.initial_fid_ab;
  return report;
}

struct ContractionReport {
  bool directional_contraction = false;
  double pr_floor = 0.0;
  double first_half_slope = 0.0;
  double second_half_slope = 0.0;
};

/// PR_G falls over the first half of the trace (Theil-Sen slope below
/// -theta on the max-normalized series), does not rise over the second
/// half, and ends below its start. pr_floor is the mean over the last window.
inline ContractionReport contraction_probe(const MetricTrace& trace, const TrendConfig& config = {}) {
  const std::size_t len = trace.size();
  if (len < 2 * static_cast<std::size_t>(config.window)) {
    fail(ErrorCode::TraceTooShort, "contraction probe needs at least 2 * window generations");
  }
  Series pr;
  for (const auto& row : trace.rows()) pr.push_back({row.generation, row.pr_g});
  const Series normalized = max_normalize(pr);
  const std::size_t half = len / 2;
  ContractionReport report;
  report.first_half_slope = theil_sen_slope(std::span<const SeriesPoint>(normalized.data(), half));
  report.second_half_slope =
      theil_sen_slope(std::span<const SeriesPoint>(normalized.data() + half, len - half));
  const Direction first = direction_of(report.first_half_slope, config.theta_slope);
  const Direction second = direction_of(report.second_half_slope, config.theta_slope);
  report.directional_contraction =
      first == Direction::Down && second != Direction::Up && pr.back().value < pr.front().value;
  double floor = 0.0;
  for (std::size_t i = len - static_cast<std::size_t>(config.window); i < len; ++i) floor += pr[i].value;
  report.pr_floor = floor / config.window;
  return report;
}

enum class ResonanceVerdict { Resonant, NonErgodic, NonContracting, Indeterminate };

constexpr std::string_view to_string(ResonanceVerdict v) {
  switch (v) {
    case ResonanceVerdict::Resonant: return "Resonant";
    case ResonanceVerdict::NonErgodic: return "NonErgodic";
    case ResonanceVerdict::NonContracting: return "NonContracting";
    case ResonanceVerdict::Indeterminate: return "Indeterminate";
  }
  return "?";
}

inline ResonanceVerdict resonance_verdict(const ErgodicityReport& ergodicity,
                                          const ContractionReport& contraction) {
  if (!ergodicity.forgets_init) return ResonanceVerdict::NonErgodic;
  return contraction.directional_contraction ? ResonanceVerdict::Resonant
                                             : ResonanceVerdict::NonContracting;
}

/// Combines verdicts from repeated probes; disagreement is Indeterminate.
inline ResonanceVerdict aggregate_verdicts(std::span<const ResonanceVerdict> verdicts) {
  if (verdicts.empty()) return ResonanceVerdict::Indeterminate;
  for (auto v : verdicts) {
    if (v != verdicts.front()) return ResonanceVerdict::Indeterminate;
  }
  return verdicts.front();
}

/// Stationary covariance of the linear kinds, from the Lyapunov fixed point.
inline Matrix stationary_covariance(const ChainOperator& op) {
  if (const auto* p = std::get_if<LinearGaussianParams>(&op.params)) {
    const auto d = p->transition.rows();
    return solve_lyapunov(p->transition, p->noise_sigma * p->noise_sigma * Matrix::Identity(d, d));
  }
  if (const auto* p = std::get_if<LatentFeedbackParams>(&op.params)) {
    const auto d = p->decoder.rows();
    return solve_lyapunov(p->decoder * p->feature_map,
                          p->noise_sigma * p->noise_sigma * Matrix::Identity(d, d));
  }
  fail(ErrorCode::InvalidArgument, "no closed-form stationary law for " + std::string(to_string(op.kind())));
}

/// Burn-in of 10 * (-1 / ln rho) generations for geometric mixing, capped at half the run.
inline int burn_in_generations(double rho, int run_length) {
  const int cap = run_length / 2;
  if (rho <= 0.0) return std::min(1, cap);
  if (rho >= 1.0) return cap;
  const double mixing = -1.0 / std::log(rho);
  return std::min(cap, static_cast<int>(std::ceil(10.0 * mixing)));
}

}  // namespace gmc
