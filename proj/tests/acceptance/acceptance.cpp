// Acceptance scenarios. Each prints one PASS/FAIL line with its wall time and
// the quantities it checked; the exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <iostream>
#include <sstream>

#include "gmc/gmc.hpp"
#include "../oracles.hpp"

using namespace gmc;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
  template <class T>
  void note(const std::string& key, const T& value) {
    detail << " " << key << "=" << value;
  }
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<void(Outcome&)> body;
};

FeatureBatch gaussian(std::uint64_t seed, const std::string& stream, Eigen::Index n, Eigen::Index d, double mean,
                      double sd) {
  auto rng = make_engine(seed, stream);
  return FeatureBatch(RowMatrix((sd * standard_normal(rng, n, d).array() + mean).matrix()));
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GaussianSummary scalar(double mean, double var) {
  return {Vector::Constant(1, mean), Matrix::Constant(1, 1, var)};
}

void metric_exactness(Outcome& o) {
  const double fid_shift = frechet_distance(scalar(0, 1), scalar(1, 1));
  const double fid_scale = frechet_distance(scalar(0, 1), scalar(0, 4));
  o.note("fid_shift", fid_shift);
  o.note("fid_scale", fid_scale);
  o.expect(close(fid_shift, 1.0, 1e-6), "FID N(0,1) vs N(1,1)");
  o.expect(close(fid_scale, 1.0, 1e-6), "FID N(0,1) vs N(0,4)");

  const double pr = spectrum_participation_ratio(Vector(Eigen::Vector3d(2, 1, 1)).asDiagonal().toDenseMatrix());
  o.note("pr", pr);
  o.expect(close(pr, 16.0 / 6.0, 1e-6), "PR {2,1,1}");

  const FeatureBatch pair(RowMatrix(Eigen::Vector2d(-1, 1)), std::vector<Label>{0, 0});
  const double sigma = sigma_intra(pair);
  o.note("sigma_intra", sigma);
  o.expect(close(sigma, 1.0, 1e-6), "sigma_intra {-1,+1}");

  // k = 2: each point contributes 1 / log(d2 / d1).
  const double by_hand = (1 / std::log(3.0) + 1 / std::log(2.0) + 1 / std::log(1.5)) / 3;
  MetricConfig k2;
  k2.k_neighbors = 2;
  const double mlb = levina_bickel(FeatureBatch(RowMatrix(Eigen::Vector3d(0, 1, 3))), k2);
  o.note("m_lb", mlb);
  o.expect(close(mlb, by_hand, 1e-6) && close(mlb, 1.6064, 1e-4), "m_LB {0,1,3} k=2");
}

void table_bijection(Outcome& o) {
  using enum Direction;
  using P = DimensionalPattern;
  struct Row {
    Direction s, m, p;
    P pattern;
  };
  const Row table[] = {{Up, Up, Up, P::CE},       {Up, Up, Down, P::WE},     {Up, Down, Up, P::AE},
                       {Up, Down, Down, P::OE},   {Down, Down, Down, P::CC}, {Down, Down, Up, P::AC},
                       {Down, Up, Down, P::WC},   {Down, Up, Up, P::OC}};
  auto flip = [](Direction d) { return d == Up ? Down : Up; };
  std::set<P> seen;
  for (const Row& r : table) {
    const P got = classify_pattern(r.s, r.m, r.p);
    o.expect(got == r.pattern, "table row " + std::string(to_string(r.pattern)));
    seen.insert(got);
    const P reversed = classify_pattern(flip(r.s), flip(r.m), flip(r.p));
    o.expect(antipattern(got) == reversed, "antipattern of " + std::string(to_string(got)));
    o.expect(antipattern(antipattern(got)) == got, "antipattern involution");
  }
  o.expect(seen.size() == 8, "eight distinct patterns");
  const std::pair<P, P> pairs[] = {{P::CE, P::CC}, {P::WE, P::AC}, {P::AE, P::WC}, {P::OE, P::OC}};
  for (auto [a, b] : pairs) o.expect(antipattern(a) == b && antipattern(b) == a, "pair " + std::string(to_string(a)));
  o.note("patterns", seen.size());
}

void ergodic_stationarity(Outcome& o) {
  const Eigen::Index d = 8;
  const std::uint64_t seed = 7;
  auto rng = make_engine(seed, "operator");
  const Matrix q = random_orthogonal(rng, d);
  Vector spectrum = Vector::Constant(d, 0.3);
  spectrum.head(2).setConstant(0.9);
  const Matrix a = q * spectrum.asDiagonal() * q.transpose();
  const double sigma = 0.5;
  const ChainOperator op{LinearGaussianParams{a, Vector::Zero(d), sigma}, seed};
  o.expect(close(spectral_radius(a), 0.9, 1e-9), "rho(A) = 0.9");

  ChainOptions options;
  options.metrics.lb_max_points = 2000;
  options.retention.mode = RetentionPolicy::Mode::SummariesOnly;
  const auto init_a = gaussian(seed, "init/a", 20000, d, -5.0, 0.5);
  const auto init_b = gaussian(seed, "init/b", 20000, d, 5.0, 0.5);
  const ChainRun run = run_chain(op, init_a, 300, options);

  const auto phases = classify_phases(drift_curves(run.trace));
  const auto onset = stationarity_onset(phases);
  o.note("final_phase", to_string(phases.back().label));
  o.note("stationary_from", onset ? std::to_string(*onset) : "none");
  o.expect(phases.back().label == PhaseLabel::Stationary && onset.has_value(), "reaches Stationary");

  const Matrix target = solve_lyapunov(a, sigma * sigma * Matrix::Identity(d, d));
  const Matrix independent = oracle::lyapunov(a, sigma * sigma * Matrix::Identity(d, d));
  o.expect((target - independent).norm() < 1e-8 * independent.norm(), "solve_lyapunov agrees with Kronecker solve");
  const double rel = (sample_covariance(run.final_batch.data()) - target).norm() / target.norm();
  o.note("cov_rel_err", rel);
  o.expect(rel < 0.05, "terminal covariance within 5% Frobenius");

  const ErgodicityReport erg = ergodicity_probe(op, init_a, init_b, 300);
  o.note("initial_fid", erg.initial_fid_ab);
  o.note("final_fid", erg.final_fid_ab);
  o.expect(erg.initial_fid_ab >= 50.0, "inits at FID >= 50");
  o.expect(erg.forgets_init, "forgets_init");
}

void contraction_resonance(Outcome& o) {
  const Eigen::Index d = 16, r = 3;
  const std::uint64_t seed = 11;
  auto rng = make_engine(seed, "operator");
  const Matrix q = random_orthogonal(rng, d);
  const Vector gains = (Vector(3) << 0.95, 0.9, 0.85).finished();
  const double sigma = 0.1;
  const ChainOperator op{LatentFeedbackParams{q.leftCols(r).transpose(), q.leftCols(r) * gains.asDiagonal(), sigma},
                         seed};
  ChainOptions options;
  options.retention.mode = RetentionPolicy::Mode::SummariesOnly;
  const ChainRun run = run_chain(op, gaussian(seed, "init", 4000, d, 0.0, 0.1), 60, options);
  const ContractionReport c = contraction_probe(run.trace);

  const Matrix a = q.leftCols(r) * gains.asDiagonal() * q.leftCols(r).transpose();
  const double pr_lyap = oracle::participation_ratio(oracle::lyapunov(a, sigma * sigma * Matrix::Identity(d, d)));
  o.note("pr_start", run.trace.rows().front().pr_g);
  o.note("pr_floor", c.pr_floor);
  o.note("pr_lyapunov", pr_lyap);
  o.expect(c.directional_contraction, "directional_contraction");
  o.expect(std::abs(c.pr_floor - pr_lyap) <= 0.1 * pr_lyap, "pr_floor within 10% of Lyapunov PR");

  const ErgodicityReport e =
      ergodicity_probe(op, gaussian(seed, "init/a", 4000, d, -5.0, 0.1), gaussian(seed, "init/b", 4000, d, 5.0, 0.1), 60);
  const ResonanceVerdict v = resonance_verdict(e, c);
  o.note("verdict", to_string(v));
  o.expect(v == ResonanceVerdict::Resonant, "verdict Resonant");
}

void non_ergodic(Outcome& o) {
  const std::uint64_t seed = 3;
  const int len = 128;
  ConvolutionParams conv;
  conv.impulse_response = Eigen::Vector3d(0.5, 0.3, 0.2);
  conv.signal_len = len;
  const ChainOperator op{conv, seed};
  auto copies = [&](const std::string& stream) {
    auto rng = make_engine(seed, stream);
    const RowMatrix base = standard_normal(rng, 1, len);
    RowMatrix rows = 0.05 * standard_normal(rng, 200, len);
    rows.rowwise() += base.row(0);
    std::vector<Label> labels(200);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i % 2);
    return FeatureBatch(rows, labels);
  };
  const FeatureBatch a = copies("init/a"), b = copies("init/b");
  ChainOptions options;
  options.metrics.k_neighbors = 5;
  options.retention.mode = RetentionPolicy::Mode::SummariesOnly;
  const ChainRun run = run_chain(op, a, 40, options);
  const ErgodicityReport e = ergodicity_probe(op, a, b, 40);
  const ResonanceVerdict v = resonance_verdict(e, contraction_probe(run.trace));
  o.note("final_fid", e.final_fid_ab);
  o.note("verdict", to_string(v));
  o.expect(!e.forgets_init, "convolution keeps its init");
  o.expect(v == ResonanceVerdict::NonErgodic, "verdict NonErgodic");

  const Eigen::Index dim = 4;
  const CycleMapParams cycle{{Vector::Zero(dim), 2.0, 1.0}, {Vector::Zero(dim), 1.5, 1.0}, CycleStart::DomainA};
  const ChainOperator cyc{cycle, 5};
  double worst = 0.0;
  Vector limit_mean[2];
  for (int basin = 0; basin < 2; ++basin) {
    FeatureBatch x = gaussian(5, basin ? "cycle/b" : "cycle/a", 500, dim, basin ? 1.0 : -1.0, 0.2);
    const RowMatrix start = x.data();
    for (int n = 1; n <= 60; ++n) x = step(cyc, x, n);
    limit_mean[basin] = x.data().colwise().mean().transpose();
    for (Eigen::Index i = 0; i < start.rows(); ++i) {
      const Vector limit = cycle_limit(cycle, start.row(i).transpose());
      worst = std::max(worst, (x.data().row(i).transpose() - limit).norm());
    }
  }
  const double gap = (limit_mean[0] - limit_mean[1]).norm();
  o.note("cycle_limit_err", worst);
  o.note("basin_gap", gap);
  o.expect(worst < 1e-6, "cycle trajectories reach their own basin limit");
  o.expect(gap > 1.0 && (limit_mean[0].array() < 0).all() && (limit_mean[1].array() > 0).all(),
           "basins give distinct limits");
}

void lucier_shape(Outcome& o) {
  const double rate = 16000;
  const std::size_t n = static_cast<std::size_t>(60 * rate);
  std::vector<LucierInput> inputs;
  for (Label c = 0; c < 4; ++c) {
    auto rng = make_engine(17, "lucier/input/" + std::to_string(c));
    std::normal_distribution<double> gauss(0.0, 0.1);
    std::vector<double> s(n);
    for (auto& v : s) v = gauss(rng);
    inputs.push_back({{std::move(s), rate}, c});
  }
  std::vector<double> decay(64);
  for (std::size_t k = 0; k < decay.size(); ++k) decay[k] = std::exp(-static_cast<double>(k) / 8.0);
  const std::vector<AudioSignal> irs{{{0.5, 0.5}, rate}, {decay, rate}};

  LucierConfig config;
  config.metrics.k_neighbors = 5;
  const LucierResult result = run_lucier(inputs, irs, 50, config);

  const double pr0 = result.pooled.rows().front().pr_g;
  const double pr50 = result.pooled.rows().back().pr_g;
  o.note("pooled_pr_0", pr0);
  o.note("pooled_pr_50", pr50);
  o.expect(result.pooled.rows().back().generation == 50, "pooled trace reaches generation 50");
  o.expect(pr50 < pr0, "pooled PR_G declines");

  double worst_rise = 0.0;
  for (std::size_t r = 0; r < irs.size(); ++r) {
    const auto& track = result.per_ir[r];
    for (std::size_t g = 4; g < track.spectral_entropy.size(); ++g) {
      worst_rise = std::max(worst_rise, track.spectral_entropy[g] - track.spectral_entropy[g - 1]);
    }
    // arg max |H| on a dense grid by the defining DFT sum.
    std::vector<double> padded(irs[r].samples);
    padded.resize(8192, 0.0);
    const auto power = oracle::power_dft(padded);
    const auto peak = static_cast<double>(std::max_element(power.begin(), power.end()) - power.begin());
    const int expected = band_of_frequency(peak * rate / 8192.0, rate, config.embedding);
    o.note("ir" + std::to_string(r) + "_band", track.dominant_band.back());
    o.expect(track.dominant_band.back() == expected, "dominant band of IR " + std::to_string(r));
  }
  o.note("max_entropy_rise_after_3", worst_rise);
  o.expect(worst_rise <= 1e-12, "spectral entropy non-increasing after generation 3");
}

void ddpm(Outcome& o) {
  GaussianSummary target{Vector::Zero(2), Matrix::Zero(2, 2)};
  target.covariance.diagonal() << 1.0, 0.25;
  const auto params = DdpmParams::linear_schedule(1000, target);
  auto source = make_engine(13, "ddpm/x_T");
  auto noise = make_engine(13, "ddpm/noise");
  const RowMatrix x = ddpm_sample(params, standard_normal(source, 10000, 2), noise);
  const Vector m = oracle::mean(x);
  const Matrix c = oracle::covariance(x);
  o.note("mean", m.transpose());
  o.note("var", c.diagonal().transpose());
  o.note("cov01", c(0, 1));
  o.expect(std::abs(m(0)) < 0.05 * 1.0 && std::abs(m(1)) < 0.05 * 0.5, "means within 5% of the std");
  o.expect(std::abs(c(0, 0) - 1.0) < 0.05 && std::abs(c(1, 1) - 0.25) < 0.05 * 0.25, "variances within 5%");
  o.expect(std::abs(c(0, 1)) < 0.05 * 0.5, "off-diagonal within 5% of sqrt(v0 v1)");

  int distinct = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const RowMatrix start = standard_normal(source, 1, 2);
    auto e1 = make_engine(static_cast<std::uint64_t>(trial), "ddpm/pair/1");
    auto e2 = make_engine(static_cast<std::uint64_t>(trial), "ddpm/pair/2");
    auto e3 = make_engine(static_cast<std::uint64_t>(trial), "ddpm/pair/1");
    const RowMatrix y1 = ddpm_sample(params, start, e1);
    distinct += (y1 != ddpm_sample(params, start, e2)) && (y1 == ddpm_sample(params, start, e3));
  }
  o.note("distinct_pairs", distinct);
  o.expect(distinct == 100, "same x_T, different noise: distinct outputs; same noise: identical");
}

Series line(int from, int to, double start, double slope) {
  Series s;
  for (int n = from; n <= to; ++n) s.push_back({n, start + slope * (n - from)});
  return s;
}

Series scaled(Series s, double c) {
  for (auto& p : s) p.value *= c;
  return s;
}

void phase_archetypes(Outcome& o) {
  struct Archetype {
    std::string name;
    DriftCurves curves;
    PhaseLabel expected;
  };
  const Archetype archetypes[] = {
      {"steep", {line(1, 12, 1.0, -0.08), line(0, 12, 0.0, 1.0 / 12)}, PhaseLabel::ActiveTransient},
      {"mixed", {line(1, 20, 0.5, 0.0), line(0, 20, 0.4, 0.03)}, PhaseLabel::SlowTransient},
      {"flat", {line(1, 20, 0.3, 0.0), line(0, 20, 2.0, 0.0)}, PhaseLabel::Stationary}};
  for (const auto& a : archetypes) {
    std::vector<PhaseLabel> base;
    for (const auto& p : classify_phases(a.curves)) base.push_back(p.label);
    bool all = !base.empty();
    for (PhaseLabel l : base) all = all && l == a.expected;
    o.expect(all, a.name + " labelled " + std::string(to_string(a.expected)));
    for (int which = 0; which < 2; ++which) {
      DriftCurves c = a.curves;
      (which ? c.cumulative : c.local) = scaled(which ? c.cumulative : c.local, 10.0);
      std::vector<PhaseLabel> labels;
      for (const auto& p : classify_phases(c)) labels.push_back(p.label);
      o.expect(labels == base, a.name + (which ? " cumulative" : " local") + " x10 keeps labels");
    }
    o.note(a.name, to_string(base.front()));
  }
}

void determinism(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "gmc_acceptance_determinism";
  fs::remove_all(dir);
  for (const char* config : {"linear_gaussian", "convolution"}) {
    std::string traces[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = dir / config / std::to_string(run);
      const std::string cmd = std::string(GMC_CLI_PATH) + " simulate --config " + GMC_SOURCE_DIR + "/configs/" +
                              config + ".ini --out " + out.string() + " > /dev/null";
      o.expect(std::system(cmd.c_str()) == 0, std::string("simulate ") + config);
      traces[run] = slurp(out / "trace.jsonl");
    }
    o.expect(!traces[0].empty() && traces[0] == traces[1], std::string("byte-identical trace for ") + config);
    o.note(std::string(config) + "_bytes", traces[0].size());
  }

  RowMatrix x = gaussian(9, "gmcf", 257, 11, 0.0, 1e3).data();
  x(0, 0) = -0.0;
  x(1, 1) = std::numeric_limits<double>::denorm_min();
  x(2, 2) = std::numeric_limits<double>::max();
  std::vector<Label> labels(257);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i * 2654435761u);
  const FeatureBatch batch(x, labels);
  write_feature_batch(dir / "batch.gmcf", batch);
  const FeatureBatch back = read_feature_batch(dir / "batch.gmcf");
  const bool same_bits = back.data().size() == x.size() &&
                         std::memcmp(back.data().data(), x.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  o.expect(same_bits && back.labels() == batch.labels(), "GMCF round-trip bit-identical");
  o.expect(encode_gmcf(back) == encode_gmcf(batch), "GMCF re-encode identical");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "metric exactness", 1, metric_exactness},
      {2, "pattern table bijection", 1, table_bijection},
      {3, "ergodic stationarity", 120, ergodic_stationarity},
      {4, "directional contraction and resonance", 120, contraction_resonance},
      {5, "non-ergodic comparators", 60, non_ergodic},
      {6, "Lucier analogue shape", 120, lucier_shape},
      {7, "DDPM analytic sampler", 120, ddpm},
      {8, "phase archetypes", 60, phase_archetypes},
      {9, "determinism and interop", 60, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (seconds >= c.limit_seconds) o.expect(false, "runtime limit " + std::to_string(c.limit_seconds) + " s");
    failures += !o.pass;
    std::printf("%s [%d] %s (%.2f s)%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), seconds,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures;
}
