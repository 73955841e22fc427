#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "gmc/error.hpp"

namespace gmc {

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return std::sqrt(sq / static_cast<double>(x.size()));
}

/// Rescales to the given RMS level. Throws ZeroSignal on an all-zero input.
inline void normalize_rms(std::span<double> x, double target = 1.0) {
  const double level = rms(x);
  if (!(level > 0.0)) fail(ErrorCode::ZeroSignal, "cannot normalize a signal with RMS 0");
  const double gain = target / level;
  for (double& v : x) v *= gain;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Linear convolution by FFT overlap-add, truncated to `out_len` samples
/// (0 means the full length x.size() + h.size() - 1).
inline std::vector<double> fft_convolve(std::span<const double> x, std::span<const double> h,
                                        std::size_t out_len = 0) {
  const std::size_t full = x.empty() || h.empty() ? 0 : x.size() + h.size() - 1;
  if (out_len == 0) out_len = full;
  std::vector<double> out(out_len, 0.0);
  if (full == 0) return out;

  const std::size_t nfft = next_pow2(std::max<std::size_t>(2 * h.size(), 1024));
  const std::size_t block = nfft - h.size() + 1;

  Eigen::FFT<double> fft;
  std::vector<double> buffer(nfft, 0.0);
  std::copy(h.begin(), h.end(), buffer.begin());
  std::vector<std::complex<double>> kernel;
  fft.fwd(kernel, buffer);

  std::vector<std::complex<double>> spectrum;
  std::vector<double> segment;
  // Input samples past out_len cannot reach the truncated output.
  const std::size_t used = std::min(x.size(), out_len);
  for (std::size_t start = 0; start < used; start += block) {
    const std::size_t count = std::min(block, used - start);
    std::fill(buffer.begin(), buffer.end(), 0.0);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(start), count, buffer.begin());
    fft.fwd(spectrum, buffer);
    for (std::size_t k = 0; k < nfft; ++k) spectrum[k] *= kernel[k];
    fft.inv(segment, spectrum);
    const std::size_t produced = count + h.size() - 1;
    for (std::size_t i = 0; i < produced && start + i < out_len; ++i) out[start + i] += segment[i];
  }
  return out;
}

/// |X(f)|^2 for bins 0..n/2 of the real FFT of x.
inline std::vector<double> power_spectrum(std::span<const double> x) {
  Eigen::FFT<double> fft;
  std::vector<double> input(x.begin(), x.end());
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, input);
  std::vector<double> power(x.size() / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
  return power;
}

/// Shannon entropy (nats) of a nonnegative vector normalized to sum 1.
inline double spectral_entropy(std::span<const double> energies) {
  double total = 0.0;
  for (double e : energies) total += e;
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (double e : energies) {
    if (e > 0.0) {
      const double p = e / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

/// Correlation coefficient of two equal-length sequences.
inline double correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace gmc
