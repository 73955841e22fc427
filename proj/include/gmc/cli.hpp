#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmc/acoustic.hpp"
#include "gmc/chains.hpp"
#include "gmc/config.hpp"
#include "gmc/drift.hpp"
#include "gmc/io.hpp"
#include "gmc/taxonomy.hpp"

namespace gmc {

namespace cli {

using ordered_json = nlohmann::ordered_json;

struct Diagnostics {
  std::vector<PhasePoint> phases;
  std::vector<PatternSegment> segments;
  std::optional<TrendVolatility> volatility;
};

/// Phases and segments for whatever the trace supports: phases need a full
/// window of local drift, segments need sigma_intra and a full trend window.
inline Diagnostics diagnose(const MetricTrace& trace, const PhaseConfig& phase, const TrendConfig& trend) {
  Diagnostics d;
  if (trace.size() >= static_cast<std::size_t>(phase.window) + 1) {
    d.phases = classify_phases(drift_curves(trace), phase);
  }
  const bool labelled = std::all_of(trace.rows().begin(), trace.rows().end(),
                                    [](const TraceRow& r) { return r.sigma_intra.has_value(); });
  if (labelled && trace.size() >= static_cast<std::size_t>(trend.window)) {
    d.segments = segment_patterns(trace, trend);
    d.volatility = trend_volatility(trace, trend);
  }
  return d;
}

inline void write_diagnosed(const MetricTrace& trace, const Diagnostics& d, const fs::path& path) {
  write_trace(trace, d.phases, d.segments, path, d.volatility);
}

inline ordered_json summary_json(const MetricTrace& trace, const Diagnostics& d, const fs::path& path) {
  ordered_json out;
  out["trace"] = path.string();
  out["generations"] = trace.size();
  const auto onset = stationarity_onset(d.phases);
  out["stationary_from"] = onset ? ordered_json(*onset) : ordered_json(nullptr);
  out["final_phase"] = d.phases.empty() ? ordered_json(nullptr) : ordered_json(to_string(d.phases.back().label));
  ordered_json patterns = ordered_json::array();
  for (const auto& s : d.segments) patterns.push_back(to_string(s.pattern));
  out["patterns"] = patterns;
  return out;
}

struct Initials {
  FeatureBatch main;
  FeatureBatch a;
  FeatureBatch b;
};

inline Initials initial_batches(const RunConfig& cfg) {
  const auto dim = cfg.op.dim();
  return {make_initial_batch(cfg.init, cfg.samples, dim, cfg.seed, "init"),
          make_initial_batch(cfg.init_a, cfg.samples, dim, cfg.seed, "init/a"),
          make_initial_batch(cfg.init_b, cfg.samples, dim, cfg.seed, "init/b")};
}

inline int simulate(const RunConfig& cfg, const fs::path& out_dir) {
  const Initials init = initial_batches(cfg);
  ChainOptions options;
  options.metrics = cfg.metrics;
  options.retention = cfg.retention;
  const ChainRun run = run_chain(cfg.op, init.main, cfg.generations, options);
  const Diagnostics d = diagnose(run.trace, cfg.phase, cfg.trend);
  const fs::path path = out_dir / "trace.jsonl";
  write_diagnosed(run.trace, d, path);
  for (const auto& snap : run.snapshots) {
    write_feature_batch(out_dir / "generations" / ("gen" + std::to_string(snap.generation) + ".gmcf"), snap.batch);
  }
  std::cout << summary_json(run.trace, d, path).dump() << "\n";
  return 0;
}

inline int probe(const RunConfig& cfg, const std::optional<fs::path>& out_dir) {
  const Initials init = initial_batches(cfg);
  ChainOptions options;
  options.metrics = cfg.metrics;
  options.retention.mode = RetentionPolicy::Mode::SummariesOnly;
  const ChainRun run = run_chain(cfg.op, init.main, cfg.generations, options);
  const ContractionReport contraction = contraction_probe(run.trace, cfg.trend);
  const ErgodicityReport ergodicity = ergodicity_probe(cfg.op, init.a, init.b, cfg.generations, cfg.probe);
  const ResonanceVerdict verdict = resonance_verdict(ergodicity, contraction);

  ordered_json report;
  report["operator"] = to_string(cfg.op.kind());
  report["generations"] = cfg.generations;
  report["ergodicity"] = {{"forgets_init", ergodicity.forgets_init},
                          {"initial_fid_ab", ergodicity.initial_fid_ab},
                          {"final_fid_ab", ergodicity.final_fid_ab}};
  report["contraction"] = {{"directional_contraction", contraction.directional_contraction},
                           {"pr_floor", contraction.pr_floor},
                           {"first_half_slope", contraction.first_half_slope},
                           {"second_half_slope", contraction.second_half_slope}};
  report["verdict"] = to_string(verdict);
  const std::string text = report.dump();
  if (out_dir) {
    const Diagnostics d = diagnose(run.trace, cfg.phase, cfg.trend);
    write_diagnosed(run.trace, d, *out_dir / "trace.jsonl");
    detail::write_text(*out_dir / "probe.json", text + "\n");
  }
  std::cout << text << "\n";
  return 0;
}

/// Generation number of a feature file: the last run of digits in its stem.
inline std::optional<int> generation_of(const fs::path& file) {
  const std::string stem = file.stem().string();
  auto end = stem.find_last_of("0123456789");
  if (end == std::string::npos) return std::nullopt;
  auto begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  return std::stoi(stem.substr(begin, end - begin + 1));
}

inline std::vector<fs::path> generation_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, dir.string() + " is not a directory");
  std::map<int, fs::path> by_generation;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".csv" && ext != ".gmcf" && ext != ".bin") continue;
    const auto n = generation_of(entry.path());
    if (!n) fail(ErrorCode::FormatError, entry.path().string() + ": no generation number in file name");
    if (!by_generation.emplace(*n, entry.path()).second) {
      fail(ErrorCode::FormatError, "two files for generation " + std::to_string(*n) + " in " + dir.string());
    }
  }
  std::vector<fs::path> files;
  int expected = by_generation.empty() ? 0 : by_generation.begin()->first;
  for (const auto& [n, path] : by_generation) {
    if (n != expected) fail(ErrorCode::FormatError, "generation " + std::to_string(expected) + " missing in " + dir.string());
    files.push_back(path);
    ++expected;
  }
  if (files.empty()) fail(ErrorCode::EmptyBatch, "no feature files in " + dir.string());
  return files;
}

inline int analyze(const fs::path& features, bool labels, const fs::path& out_dir, const MetricConfig& metrics,
                   const PhaseConfig& phase, const TrendConfig& trend) {
  const auto files = generation_files(features);
  MetricTrace trace;
  std::optional<FeatureBatch> initial, previous;
  for (std::size_t i = 0; i < files.size(); ++i) {
    FeatureBatch batch = read_feature_batch(files[i]);
    if (labels && !batch.has_labels()) fail(ErrorCode::MissingLabels, files[i].string() + " has no label column");
    if (!labels) batch = FeatureBatch(batch.data());
    try {
      trace.append(compute_trace_row(static_cast<int>(i), batch, previous ? &*previous : nullptr,
                                     initial ? *initial : batch, metrics));
    } catch (const Error& e) {
      throw e.with_context(files[i].string());
    }
    if (!initial) initial = batch;
    previous = std::move(batch);
  }
  const Diagnostics d = diagnose(trace, phase, trend);
  const fs::path path = out_dir / "trace.jsonl";
  write_diagnosed(trace, d, path);
  std::cout << summary_json(trace, d, path).dump() << "\n";
  return 0;
}

inline int lucier(const std::vector<std::string>& inputs, const std::vector<std::string>& irs, int generations,
                  const LucierConfig& config, const PhaseConfig& phase, const TrendConfig& trend,
                  const fs::path& out_dir) {
  std::vector<LucierInput> in;
  for (std::size_t i = 0; i < inputs.size(); ++i) in.push_back({load_wav(inputs[i]), static_cast<Label>(i)});
  std::vector<AudioSignal> h;
  for (const auto& path : irs) h.push_back(load_wav(path));
  const LucierResult result = run_lucier(in, h, generations, config);

  ordered_json report;
  report["generations"] = generations;
  ordered_json per_ir = ordered_json::array();
  for (std::size_t r = 0; r < result.per_ir.size(); ++r) {
    const auto& track = result.per_ir[r];
    const fs::path path = out_dir / ("ir" + std::to_string(r)) / "trace.jsonl";
    write_diagnosed(track.trace, diagnose(track.trace, phase, trend), path);
    for (std::size_t i = 0; i < track.final_signals.size(); ++i) {
      save_wav(out_dir / ("ir" + std::to_string(r)) / ("final" + std::to_string(i) + ".wav"),
               track.final_signals[i]);
    }
    per_ir.push_back({{"ir", irs[r]},
                      {"trace", path.string()},
                      {"expected_band", band_of_frequency(dominant_frequency(h[r]), h[r].sample_rate,
                                                          config.embedding)},
                      {"dominant_band", track.dominant_band},
                      {"spectral_entropy", track.spectral_entropy}});
  }
  report["per_ir"] = per_ir;
  const fs::path pooled = out_dir / "pooled" / "trace.jsonl";
  write_diagnosed(result.pooled, diagnose(result.pooled, phase, trend), pooled);
  report["pooled"] = pooled.string();
  const std::string text = report.dump();
  detail::write_text(out_dir / "lucier.json", text + "\n");
  std::cout << text << "\n";
  return 0;
}

inline int classify(const fs::path& trace_path, const std::optional<fs::path>& out, const TrendConfig& trend) {
  const TraceFile file = read_trace(trace_path);
  const auto segments = segment_patterns(file.trace, trend);
  const std::string text = segments_json(segments, trend_volatility(file.trace, trend)).dump(2) + "\n";
  if (out) {
    detail::write_text(*out, text);
  } else {
    std::cout << text;
  }
  return 0;
}

inline void report_error(std::string_view code, const std::string& message) {
  nlohmann::json line = {{"error", code}, {"message", message}};
  std::cerr << line.dump() << "\n";
}

}  // namespace cli

/// Entry point of the `gmc` tool. Exit 0 on success, 2 on a usage error and
/// 1 on a runtime error (one JSON line on stderr).
inline int cli_main(int argc, char** argv) {
  CLI::App app{"Generational Markov chain simulator and diagnostics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gmc 0.1.0");

  std::string config_path, out_dir, features_dir, trace_path;
  std::optional<std::string> out_file;
  bool labels = false;
  int generations = 50;
  MetricConfig metrics;
  PhaseConfig phase;
  TrendConfig trend;
  EmbeddingConfig embedding;
  std::vector<std::string> wav_inputs, wav_irs;

  auto* sim = app.add_subcommand("simulate", "Run a chain from a config file and write its trace");
  sim->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out_dir, "Output directory (default: [run] output)");

  auto* ana = app.add_subcommand("analyze", "Diagnose a directory of per-generation feature files");
  ana->add_option("--features", features_dir, "Directory of gen<N>.csv / gen<N>.gmcf files")
      ->required()
      ->check(CLI::ExistingDirectory);
  ana->add_flag("--labels", labels, "Use the label column (enables sigma_intra and segments)");
  ana->add_option("--out", out_dir, "Output directory")->default_val("out");
  ana->add_option("--k", metrics.k_neighbors, "Neighbours for m_LB")->default_val(10);
  ana->add_option("--phase-window", phase.window, "Trailing window of the phase classifier")->default_val(5);
  ana->add_option("--trend-window", trend.window, "Window of the pattern trends")->default_val(7);

  auto* luc = app.add_subcommand("lucier", "Iterate WAV signals through impulse responses");
  luc->add_option("--input", wav_inputs, "Input WAV (repeatable)")->required()->check(CLI::ExistingFile);
  luc->add_option("--ir", wav_irs, "Impulse response WAV (repeatable)")->required()->check(CLI::ExistingFile);
  luc->add_option("--generations", generations, "Number of generations")->required()->check(CLI::NonNegativeNumber);
  luc->add_option("--k", metrics.k_neighbors, "Neighbours for m_LB")->default_val(10);
  luc->add_option("--window-seconds", embedding.window_seconds, "Embedding window length")->default_val(20.0);
  luc->add_option("--out", out_dir, "Output directory")->default_val("out");

  auto* prb = app.add_subcommand("probe", "Ergodicity and contraction probes with a resonance verdict");
  prb->add_option("--config", config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
  prb->add_option("--out", out_file, "Also write trace and report to this directory");

  auto* cls = app.add_subcommand("classify", "Re-run the pattern taxonomy on a trace file");
  cls->add_option("--trace", trace_path, "JSON-lines trace")->required()->check(CLI::ExistingFile);
  cls->add_option("--out", out_file, "Write segments JSON here instead of stdout");
  cls->add_option("--trend-window", trend.window, "Window of the pattern trends")->default_val(7);
  cls->add_option("--theta", trend.theta_slope, "Dead zone on normalized slopes")->default_val(0.01);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) {
      const RunConfig cfg = load_run_config(config_path);
      return cli::simulate(cfg, out_dir.empty() ? fs::path(cfg.output) : fs::path(out_dir));
    }
    if (prb->parsed()) {
      const RunConfig cfg = load_run_config(config_path);
      return cli::probe(cfg, out_file ? std::optional<fs::path>(*out_file) : std::nullopt);
    }
    if (ana->parsed()) {
      check(phase);
      return cli::analyze(features_dir, labels, out_dir, metrics, phase, trend);
    }
    if (luc->parsed()) {
      LucierConfig config;
      config.metrics = metrics;
      config.embedding = embedding;
      return cli::lucier(wav_inputs, wav_irs, generations, config, phase, trend, out_dir);
    }
    if (cls->parsed()) {
      return cli::classify(trace_path, out_file ? std::optional<fs::path>(*out_file) : std::nullopt, trend);
    }
  } catch (const Error& e) {
    cli::report_error(to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    cli::report_error("Internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace gmc
