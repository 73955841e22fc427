#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "gmc/core.hpp"

namespace gmc {

// Seed splitting: every named stream gets
//   splitmix64(seed ^ fnv1a64(stream_name))
// as the seed of its own mt19937_64. Streams are identified by name only, so
// the draws of one trajectory never depend on the schedule of another.

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) {
  return splitmix64(seed ^ fnv1a64(stream));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view stream) {
  return Engine(stream_seed(seed, stream));
}

/// Stream for one generation of one trajectory.
inline Engine trajectory_engine(std::uint64_t seed, int trajectory, int generation) {
  return make_engine(seed, "trajectory/" + std::to_string(trajectory) + "/generation/" +
                               std::to_string(generation));
}

inline RowMatrix standard_normal(Engine& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
inline Matrix random_orthogonal(Engine& rng, Eigen::Index dim) {
  Matrix g = standard_normal(rng, dim, dim);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace gmc
