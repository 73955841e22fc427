#pragma once

#include <array>
#include <bit>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gmc/core.hpp"
#include "gmc/drift.hpp"
#include "gmc/metrics.hpp"
#include "gmc/signal.hpp"

namespace gmc {

/// Mono waveform; samples nominally in [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  double sample_rate = 0.0;
};

inline void validate_signal(const AudioSignal& x) {
  if (!(x.sample_rate > 0.0)) fail(ErrorCode::InvalidArgument, "sample rate must be positive");
  if (x.samples.empty()) fail(ErrorCode::EmptyBatch, "audio signal has no samples");
  for (double v : x.samples) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "audio signal has a non-finite sample");
  }
}

// ---------------------------------------------------------------------------
// WAV I/O (RIFF/WAVE, PCM 16-bit or IEEE float 32-bit, any channel count)

enum class WavEncoding { Pcm16, Float32 };

namespace detail {

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Decodes an in-memory WAV image. Multichannel audio is averaged to mono and
/// 16-bit integers are scaled by 1/32768.
inline AudioSignal decode_wav(std::span<const unsigned char> bytes) {
  using detail::le16;
  using detail::le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::CorruptHeader, "missing RIFF/WAVE header");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const unsigned char> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        fail(ErrorCode::CorruptHeader, "truncated fmt chunk at byte " + std::to_string(pos));
      }
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        // WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the format tag.
        if (size < 40) fail(ErrorCode::CorruptHeader, "truncated extensible fmt chunk");
        format = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
      data = bytes.subspan(body, available);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) fail(ErrorCode::CorruptHeader, "missing fmt or data chunk");
  if (channels == 0 || rate == 0) fail(ErrorCode::CorruptHeader, "zero channels or sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    fail(ErrorCode::UnsupportedEncoding, "format tag " + std::to_string(format) + " with " +
                                             std::to_string(bits) + "-bit samples");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data.size() / (width * channels);
  AudioSignal out;
  out.sample_rate = static_cast<double>(rate);
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data.data() + (f * channels + c) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        acc += static_cast<double>(std::bit_cast<float>(le32(p)));
      }
    }
    out.samples[f] = acc / channels;
  }
  return out;
}

inline AudioSignal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

/// Encodes interleaved frames (channels x frames) as a WAV image.
inline std::vector<unsigned char> encode_wav(std::span<const double> interleaved, int channels,
                                             double sample_rate, WavEncoding encoding) {
  using detail::put16;
  using detail::put32;
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t tag = encoding == WavEncoding::Pcm16 ? 1 : 3;
  const std::uint32_t data_size = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, tag);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, rate);
  put32(out, rate * static_cast<std::uint32_t>(channels) * (bits / 8));
  put16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_size);
  for (double v : interleaved) {
    if (encoding == WavEncoding::Pcm16) {
      const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    } else {
      put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

inline void save_wav(const std::filesystem::path& path, const AudioSignal& x,
                     WavEncoding encoding = WavEncoding::Float32) {
  const auto bytes = encode_wav(x.samples, 1, x.sample_rate, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Feedback loop

/// One generation: FFT linear convolution with h, truncated to len(x), RMS 1.
inline AudioSignal lucier_generation(const AudioSignal& x, const AudioSignal& h) {
  if (x.sample_rate != h.sample_rate) {
    fail(ErrorCode::SampleRateMismatch, "signal and impulse response sample rates differ");
  }
  if (!(rms(x.samples) > 0.0)) fail(ErrorCode::ZeroSignal, "input signal has RMS 0");
  AudioSignal out{fft_convolve(x.samples, h.samples, x.samples.size()), x.sample_rate};
  normalize_rms(out.samples, 1.0);
  return out;
}

struct EmbeddingConfig {
  double window_seconds = 20.0;
  int bands = 64;
};

inline std::size_t window_length(double sample_rate, const EmbeddingConfig& config) {
  return static_cast<std::size_t>(std::llround(config.window_seconds * sample_rate));
}

/// Band energies (sum of |X(f)|^2 over B uniform bands of rfft bins) per
/// non-overlapping window. A trailing partial window is dropped.
inline std::vector<std::vector<double>> band_energies(const AudioSignal& x, const EmbeddingConfig& config = {}) {
  validate_signal(x);
  const std::size_t w = window_length(x.sample_rate, config);
  const std::size_t windows = w == 0 ? 0 : x.samples.size() / w;
  if (windows == 0) {
    fail(ErrorCode::SignalTooShort, "signal of " + std::to_string(x.samples.size()) +
                                        " samples is shorter than one embedding window");
  }
  const auto bands = static_cast<std::size_t>(config.bands);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < windows; ++k) {
    const std::span<const double> frame(x.samples.data() + k * w, w);
    const std::vector<double> power = power_spectrum(frame);
    std::vector<double> energy(bands, 0.0);
    for (std::size_t bin = 0; bin < power.size(); ++bin) {
      energy[bin * bands / power.size()] += power[bin];
    }
    out.push_back(std::move(energy));
  }
  return out;
}

/// Band index containing a frequency in Hz for a given sample rate.
inline int band_of_frequency(double frequency, double sample_rate, const EmbeddingConfig& config = {}) {
  const std::size_t w = window_length(sample_rate, config);
  const std::size_t bins = w / 2 + 1;
  const auto bin = static_cast<std::size_t>(std::llround(frequency * static_cast<double>(w) / sample_rate));
  return static_cast<int>(std::min(bin, bins - 1) * static_cast<std::size_t>(config.bands) / bins);
}

/// One row per window: log10(band energy + 1e-12).
inline FeatureBatch embed(const AudioSignal& x, const EmbeddingConfig& config = {}) {
  const auto energies = band_energies(x, config);
  RowMatrix rows(static_cast<Eigen::Index>(energies.size()), config.bands);
  for (std::size_t i = 0; i < energies.size(); ++i) {
    for (int j = 0; j < config.bands; ++j) {
      rows(static_cast<Eigen::Index>(i), j) = std::log10(energies[i][static_cast<std::size_t>(j)] + 1e-12);
    }
  }
  return FeatureBatch(std::move(rows));
}

/// Frequency (Hz) maximizing |H(f)| on a grid of `grid` points in [0, fs/2].
inline double dominant_frequency(const AudioSignal& h, std::size_t grid = 8192) {
  double best_f = 0.0, best = -1.0;
  for (std::size_t i = 0; i <= grid; ++i) {
    const double f = 0.5 * h.sample_rate * static_cast<double>(i) / static_cast<double>(grid);
    const double w = 2.0 * std::numbers::pi * f / h.sample_rate;
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < h.samples.size(); ++n) {
      acc += h.samples[n] * std::polar(1.0, -w * static_cast<double>(n));
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
    }
  }
  return best_f;
}

struct LucierInput {
  AudioSignal signal;
  Label class_id = 0;
};

struct LucierConfig {
  MetricConfig metrics;
  EmbeddingConfig embedding;
};

/// Per-generation diagnostics of one impulse-response chain.
struct LucierTrack {
  MetricTrace trace;
  /// Entropy of the window-averaged band energies, mean over inputs.
  std::vector<double> spectral_entropy;
  /// Band with the largest window-averaged energy, pooled over inputs.
  std::vector<int> dominant_band;
  std::vector<AudioSignal> final_signals;
};

struct LucierResult {
  std::vector<LucierTrack> per_ir;
  /// Rows from every IR chain, labelled by IR index. Generation 0 holds the
  /// shared inputs once.
  MetricTrace pooled;
};

namespace detail {

struct GenerationEmbedding {
  RowMatrix rows;
  std::vector<Label> labels;
  double entropy = 0.0;
  int dominant_band = 0;
};

inline GenerationEmbedding embed_generation(const std::vector<AudioSignal>& signals,
                                            const std::vector<Label>& classes,
                                            const EmbeddingConfig& config) {
  GenerationEmbedding out;
  std::vector<std::vector<double>> rows;
  std::vector<double> pooled(static_cast<std::size_t>(config.bands), 0.0);
  double entropy = 0.0;
  for (std::size_t s = 0; s < signals.size(); ++s) {
    const auto energies = band_energies(signals[s], config);
    std::vector<double> mean(static_cast<std::size_t>(config.bands), 0.0);
    for (const auto& e : energies) {
      std::vector<double> row(e.size());
      for (std::size_t j = 0; j < e.size(); ++j) {
        row[j] = std::log10(e[j] + 1e-12);
        mean[j] += e[j] / static_cast<double>(energies.size());
      }
      rows.push_back(std::move(row));
      out.labels.push_back(classes[s]);
    }
    entropy += spectral_entropy(mean);
    for (std::size_t j = 0; j < mean.size(); ++j) pooled[j] += mean[j];
  }
  out.entropy = entropy / static_cast<double>(signals.size());
  out.dominant_band =
      static_cast<int>(std::distance(pooled.begin(), std::max_element(pooled.begin(), pooled.end())));
  out.rows.resize(static_cast<Eigen::Index>(rows.size()), config.bands);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < config.bands; ++j) {
      out.rows(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

class TraceBuilder {
 public:
  explicit TraceBuilder(MetricConfig config) : config_(config) {}

  void add(const FeatureBatch& batch) {
    const int n = static_cast<int>(summaries_.size());
    summaries_.push_back(estimate_gaussian(batch));
    const GaussianSummary* prev = n > 0 ? &summaries_[static_cast<std::size_t>(n - 1)] : nullptr;
    try {
      trace_.append(compute_trace_row(n, batch, summaries_.back(), prev, summaries_.front(), config_));
    } catch (const Error& e) {
      throw e.with_context("generation " + std::to_string(n));
    }
  }

  const MetricTrace& trace() const { return trace_; }

 private:
  MetricConfig config_;
  std::vector<GaussianSummary> summaries_;
  MetricTrace trace_;
};

}  // namespace detail

/// Iterates every input through every IR for n_generations. Per-IR traces use
/// input class ids as labels; the pooled trace treats each IR as a class.
inline LucierResult run_lucier(const std::vector<LucierInput>& inputs, const std::vector<AudioSignal>& irs,
                               int n_generations, const LucierConfig& config = {}) {
  if (inputs.empty() || irs.empty()) fail(ErrorCode::InvalidArgument, "need at least one input and one IR");
  if (n_generations < 0) fail(ErrorCode::InvalidArgument, "n_generations must be nonnegative");
  const double rate = inputs.front().signal.sample_rate;
  for (const auto& in : inputs) {
    validate_signal(in.signal);
    if (in.signal.sample_rate != rate) fail(ErrorCode::SampleRateMismatch, "inputs differ in sample rate");
  }
  for (const auto& h : irs) {
    validate_signal(h);
    if (h.sample_rate != rate) fail(ErrorCode::SampleRateMismatch, "impulse response sample rate differs");
  }

  std::vector<Label> input_classes;
  std::vector<AudioSignal> start;
  for (const auto& in : inputs) {
    input_classes.push_back(in.class_id);
    AudioSignal s = in.signal;
    normalize_rms(s.samples, 1.0);
    start.push_back(std::move(s));
  }

  LucierResult result;
  std::vector<std::vector<AudioSignal>> state(irs.size(), start);
  std::vector<detail::TraceBuilder> builders(irs.size(), detail::TraceBuilder(config.metrics));
  detail::TraceBuilder pooled(config.metrics);
  result.per_ir.resize(irs.size());

  for (int n = 0; n <= n_generations; ++n) {
    std::vector<RowMatrix> ir_rows;
    for (std::size_t r = 0; r < irs.size(); ++r) {
      if (n > 0) {
        for (auto& s : state[r]) s = lucier_generation(s, irs[r]);
      }
      auto g = detail::embed_generation(state[r], input_classes, config.embedding);
      result.per_ir[r].spectral_entropy.push_back(g.entropy);
      result.per_ir[r].dominant_band.push_back(g.dominant_band);
      builders[r].add(FeatureBatch(g.rows, g.labels));
      ir_rows.push_back(std::move(g.rows));
    }
    if (n == 0) {
      // Every IR chain starts from the same inputs; pool them once.
      pooled.add(FeatureBatch(ir_rows.front(), std::vector<Label>(static_cast<std::size_t>(ir_rows.front().rows()), 0)));
    } else {
      Eigen::Index total = 0;
      for (const auto& m : ir_rows) total += m.rows();
      RowMatrix all(total, config.embedding.bands);
      std::vector<Label> labels;
      Eigen::Index offset = 0;
      for (std::size_t r = 0; r < ir_rows.size(); ++r) {
        all.middleRows(offset, ir_rows[r].rows()) = ir_rows[r];
        offset += ir_rows[r].rows();
        labels.insert(labels.end(), static_cast<std::size_t>(ir_rows[r].rows()), static_cast<Label>(r));
      }
      pooled.add(FeatureBatch(std::move(all), std::move(labels)));
    }
  }
  for (std::size_t r = 0; r < irs.size(); ++r) {
    result.per_ir[r].trace = builders[r].trace();
    result.per_ir[r].final_signals = state[r];
  }
  result.pooled = pooled.trace();
  return result;
}

}  // namespace gmc
