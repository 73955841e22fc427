#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gmc/chains.hpp"
#include "gmc/drift.hpp"
#include "gmc/io.hpp"
#include "gmc/random.hpp"
#include "gmc/taxonomy.hpp"

// Run configuration: an INI file with the sections below. Vectors are comma
// separated; a single value broadcasts to every coordinate. Matrices are
// written as `identity:<s>`, `diag:<v1,...>`, `full:<row-major values>` or
// `rotated:<v1,...>` (Q diag(v) Q^T with Q a seeded random rotation).
//
//   [run]       seed, generations, samples, retention (auto|all|summaries|every:<k>), output
//   [operator]  kind = linear_gaussian | latent_feedback | convolution | cycle_map | ddpm
//               dim, transition, offset, noise_sigma          (linear_gaussian)
//               dim, rank, gains, noise_sigma                 (latent_feedback)
//               impulse_response, signal_len, norm_target     (convolution)
//               dim, center, ab_amplitude, ab_steepness,
//               ba_amplitude, ba_steepness, start = A | B     (cycle_map)
//               steps, beta_start, beta_end, target_mean,
//               target_cov, condition_on_input                (ddpm)
//   [init], [init_a], [init_b]
//               kind = gaussian | signal_copies, mean, std, jitter, classes
//   [metrics]   k_neighbors, lb_max_points
//   [phase]     window, slope_active, slope_flat
//   [trend]     window, theta_slope
//   [probe]     epsilon_fraction, min_initial_fid

namespace gmc {

namespace pt = boost::property_tree;

struct InitSpec {
  enum class Kind { Gaussian, SignalCopies };
  Kind kind = Kind::Gaussian;
  std::vector<double> mean{0.0};
  double std = 1.0;
  double jitter = 0.01;
  int classes = 1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int generations = 10;
  int samples = 1000;
  RetentionPolicy retention;
  std::string output = "out";
  ChainOperator op;
  InitSpec init;
  InitSpec init_a;
  InitSpec init_b;
  MetricConfig metrics;
  PhaseConfig phase;
  TrendConfig trend;
  ProbeConfig probe;
};

namespace detail {

inline std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& cell : split(text, ',')) {
    const auto v = parse_double(cell);
    if (!v) fail(ErrorCode::ConfigError, key + ": cannot parse '" + cell + "'");
    out.push_back(*v);
  }
  return out;
}

inline Vector broadcast(const std::vector<double>& values, Eigen::Index dim, const std::string& key) {
  if (values.size() == 1) return Vector::Constant(dim, values.front());
  if (static_cast<Eigen::Index>(values.size()) != dim) {
    fail(ErrorCode::ConfigError, key + ": expected 1 or " + std::to_string(dim) + " values");
  }
  return Eigen::Map<const Vector>(values.data(), dim);
}

inline Matrix parse_matrix(const std::string& text, Eigen::Index dim, Engine& rng, const std::string& key) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) fail(ErrorCode::ConfigError, key + ": expected <form>:<values>");
  const std::string form = trim(text.substr(0, colon));
  const auto values = parse_list(text.substr(colon + 1), key);
  if (form == "identity") {
    if (values.size() != 1) fail(ErrorCode::ConfigError, key + ": identity takes one scale");
    return values.front() * Matrix::Identity(dim, dim);
  }
  if (form == "diag") return broadcast(values, dim, key).asDiagonal();
  if (form == "rotated") {
    const Matrix q = random_orthogonal(rng, dim);
    return q * broadcast(values, dim, key).asDiagonal() * q.transpose();
  }
  if (form == "full") {
    if (static_cast<Eigen::Index>(values.size()) != dim * dim) {
      fail(ErrorCode::ConfigError, key + ": full matrix needs " + std::to_string(dim * dim) + " values");
    }
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), dim, dim);
  }
  fail(ErrorCode::ConfigError, key + ": unknown matrix form '" + form + "'");
}

class Section {
 public:
  Section(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (auto child = root.get_child_optional(name_)) tree_ = *child;
  }

  bool present() const { return !tree_.empty(); }

  std::optional<std::string> raw(const std::string& key) const {
    if (auto v = tree_.get_optional<std::string>(key)) return trim(*v);
    return std::nullopt;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  std::string required(const std::string& key) const {
    auto v = raw(key);
    if (!v) fail(ErrorCode::ConfigError, "[" + name_ + "] " + key + " is required");
    return *v;
  }

  double number(const std::string& key, double fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    auto d = parse_double(*v);
    if (!d) fail(ErrorCode::ConfigError, "[" + name_ + "] " + key + ": not a number");
    return *d;
  }

  long long integer(const std::string& key, long long fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
      fail(ErrorCode::ConfigError, "[" + name_ + "] " + key + ": not an integer");
    }
    return out;
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    return parse_list(*v, "[" + name_ + "] " + key);
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  pt::ptree tree_;
};

inline InitSpec parse_init(const Section& s, const InitSpec& fallback) {
  InitSpec out = fallback;
  if (!s.present()) return out;
  const std::string kind = s.text("kind", out.kind == InitSpec::Kind::Gaussian ? "gaussian" : "signal_copies");
  if (kind == "gaussian") {
    out.kind = InitSpec::Kind::Gaussian;
  } else if (kind == "signal_copies") {
    out.kind = InitSpec::Kind::SignalCopies;
  } else {
    fail(ErrorCode::ConfigError, "[" + s.name() + "] unknown kind '" + kind + "'");
  }
  out.mean = s.list("mean", out.mean);
  out.std = s.number("std", out.std);
  out.jitter = s.number("jitter", out.jitter);
  out.classes = static_cast<int>(s.integer("classes", out.classes));
  if (out.classes < 1) fail(ErrorCode::ConfigError, "[" + s.name() + "] classes must be >= 1");
  return out;
}

inline ChainOperator parse_operator(const Section& s, std::uint64_t seed) {
  ChainOperator op;
  op.rng_seed = seed;
  Engine rng = make_engine(seed, "operator");
  const std::string kind = s.required("kind");
  if (kind == "linear_gaussian") {
    const auto dim = static_cast<Eigen::Index>(s.integer("dim", 1));
    LinearGaussianParams p;
    p.transition = parse_matrix(s.text("transition", "identity:0.5"), dim, rng, "[operator] transition");
    p.offset = broadcast(s.list("offset", {0.0}), dim, "[operator] offset");
    p.noise_sigma = s.number("noise_sigma", 1.0);
    op.params = std::move(p);
  } else if (kind == "latent_feedback") {
    const auto dim = static_cast<Eigen::Index>(s.integer("dim", 16));
    const auto rank = static_cast<Eigen::Index>(s.integer("rank", 3));
    if (rank < 1 || rank > dim) fail(ErrorCode::ConfigError, "[operator] rank must lie in [1, dim]");
    const Vector gains = broadcast(s.list("gains", {0.9}), rank, "[operator] gains");
    // F picks r orthonormal directions; M maps them back scaled by the gains.
    const Matrix q = random_orthogonal(rng, dim);
    LatentFeedbackParams p;
    p.feature_map = q.leftCols(rank).transpose();
    p.decoder = q.leftCols(rank) * gains.asDiagonal();
    p.noise_sigma = s.number("noise_sigma", 0.1);
    op.params = std::move(p);
  } else if (kind == "convolution") {
    ConvolutionParams p;
    const auto h = s.list("impulse_response", {1.0});
    p.impulse_response = Eigen::Map<const Vector>(h.data(), static_cast<Eigen::Index>(h.size()));
    p.signal_len = static_cast<int>(s.integer("signal_len", 256));
    p.norm_target = s.number("norm_target", 1.0);
    op.params = std::move(p);
  } else if (kind == "cycle_map") {
    const auto dim = static_cast<Eigen::Index>(s.integer("dim", 2));
    const Vector center = broadcast(s.list("center", {0.0}), dim, "[operator] center");
    CycleMapParams p;
    p.ab = {center, s.number("ab_amplitude", 2.0), s.number("ab_steepness", 1.0)};
    p.ba = {center, s.number("ba_amplitude", 1.5), s.number("ba_steepness", 1.0)};
    const std::string start = s.text("start", "A");
    if (start != "A" && start != "B") fail(ErrorCode::ConfigError, "[operator] start must be A or B");
    p.start = start == "A" ? CycleStart::DomainA : CycleStart::DomainB;
    op.params = std::move(p);
  } else if (kind == "ddpm") {
    const auto mean = s.list("target_mean", {0.0, 0.0});
    const auto dim = static_cast<Eigen::Index>(mean.size());
    GaussianSummary target{Eigen::Map<const Vector>(mean.data(), dim),
                           parse_matrix(s.text("target_cov", "identity:1"), dim, rng, "[operator] target_cov")};
    DdpmParams p = DdpmParams::linear_schedule(static_cast<int>(s.integer("steps", 1000)), std::move(target),
                                               s.number("beta_start", 1e-4), s.number("beta_end", 0.02));
    p.condition_on_input = s.text("condition_on_input", "false") == "true";
    op.params = std::move(p);
  } else {
    fail(ErrorCode::ConfigError, "[operator] unknown kind '" + kind + "'");
  }
  check_operator(op);
  return op;
}

inline RetentionPolicy parse_retention(const std::string& text) {
  RetentionPolicy r;
  if (text == "auto") {
    r.mode = RetentionPolicy::Mode::Auto;
  } else if (text == "all") {
    r.mode = RetentionPolicy::Mode::All;
  } else if (text == "summaries") {
    r.mode = RetentionPolicy::Mode::SummariesOnly;
  } else if (text.rfind("every:", 0) == 0) {
    r.mode = RetentionPolicy::Mode::Every;
    r.every = std::stoi(text.substr(6));
    if (r.every < 1) fail(ErrorCode::ConfigError, "[run] retention every:<k> needs k >= 1");
  } else {
    fail(ErrorCode::ConfigError, "[run] unknown retention '" + text + "'");
  }
  return r;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ConfigError, std::string("line ") + std::to_string(e.line()) + ": " + e.message());
  }
  using detail::Section;
  RunConfig cfg;
  const Section run(root, "run");
  cfg.seed = static_cast<std::uint64_t>(run.integer("seed", 0));
  cfg.generations = static_cast<int>(run.integer("generations", cfg.generations));
  cfg.samples = static_cast<int>(run.integer("samples", cfg.samples));
  cfg.retention = detail::parse_retention(run.text("retention", "auto"));
  cfg.output = run.text("output", cfg.output);
  if (cfg.generations < 1) fail(ErrorCode::ConfigError, "[run] generations must be >= 1");
  if (cfg.samples < 1) fail(ErrorCode::ConfigError, "[run] samples must be >= 1");

  cfg.op = detail::parse_operator(Section(root, "operator"), cfg.seed);
  cfg.init = detail::parse_init(Section(root, "init"), InitSpec{});
  cfg.init_a = detail::parse_init(Section(root, "init_a"), cfg.init);
  cfg.init_b = detail::parse_init(Section(root, "init_b"), cfg.init);

  const Section metrics(root, "metrics");
  cfg.metrics.k_neighbors = static_cast<int>(metrics.integer("k_neighbors", cfg.metrics.k_neighbors));
  cfg.metrics.lb_max_points = static_cast<int>(metrics.integer("lb_max_points", cfg.metrics.lb_max_points));
  const Section phase(root, "phase");
  cfg.phase.window = static_cast<int>(phase.integer("window", cfg.phase.window));
  cfg.phase.slope_active = phase.number("slope_active", cfg.phase.slope_active);
  cfg.phase.slope_flat = phase.number("slope_flat", cfg.phase.slope_flat);
  check(cfg.phase);
  const Section trend(root, "trend");
  cfg.trend.window = static_cast<int>(trend.integer("window", cfg.trend.window));
  cfg.trend.theta_slope = trend.number("theta_slope", cfg.trend.theta_slope);
  const Section probe(root, "probe");
  cfg.probe.epsilon_fraction = probe.number("epsilon_fraction", cfg.probe.epsilon_fraction);
  cfg.probe.min_initial_fid = probe.number("min_initial_fid", cfg.probe.min_initial_fid);
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return parse_run_config(in);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

/// Draws an initial batch of `samples` rows of dimension `dim` from the
/// stream named `stream`. Labels cycle through 0..classes-1.
inline FeatureBatch make_initial_batch(const InitSpec& spec, int samples, Eigen::Index dim, std::uint64_t seed,
                                       std::string_view stream) {
  Engine rng = make_engine(seed, stream);
  RowMatrix data(samples, dim);
  if (spec.kind == InitSpec::Kind::Gaussian) {
    const Vector mean = detail::broadcast(spec.mean, dim, "init mean");
    data = spec.std * standard_normal(rng, samples, dim);
    data.rowwise() += mean.transpose();
  } else {
    // One base signal shared by every row plus small independent jitter.
    const RowMatrix base = standard_normal(rng, 1, dim);
    const Vector mean = detail::broadcast(spec.mean, dim, "init mean");
    data = spec.jitter * standard_normal(rng, samples, dim);
    for (Eigen::Index i = 0; i < samples; ++i) data.row(i) += spec.std * base.row(0) + mean.transpose();
  }
  std::vector<Label> labels(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) labels[static_cast<std::size_t>(i)] = static_cast<Label>(i % spec.classes);
  return FeatureBatch(std::move(data), std::move(labels));
}

}  // namespace gmc
