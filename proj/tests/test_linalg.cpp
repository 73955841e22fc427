#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "gmc/gmc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gmc;
using testutil::code_of;
using testutil::rows;

namespace {

Matrix random_psd(std::uint64_t seed, Eigen::Index d) {
  const Matrix b = testutil::gaussian(seed, d, d);
  return b * b.transpose();
}

}  // namespace

TEST(Decompose, ReconstructsAndIsOrthonormal) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix a = random_psd(seed, 7) - 2.0 * Matrix::Identity(7, 7);
    const auto e = decompose_symmetric(a);
    const Matrix v = e.eigenvectors;
    EXPECT_LE((v * e.eigenvalues.asDiagonal() * v.transpose() - a).norm(), 1e-8 * a.norm());
    EXPECT_LE((v.transpose() * v - Matrix::Identity(7, 7)).norm(), 1e-8 * std::sqrt(7.0));
    for (Eigen::Index i = 1; i < 7; ++i) EXPECT_GE(e.eigenvalues(i - 1), e.eigenvalues(i));
  }
}

TEST(Decompose, MatchesJacobiSpectrum) {
  const Matrix a = random_psd(9, 6);
  Vector expected = oracle::jacobi(a).values;
  std::sort(expected.data(), expected.data() + expected.size(), std::greater<>());
  EXPECT_LT((decompose_symmetric(a).eigenvalues - expected).norm(), 1e-9 * a.norm());
}

TEST(Decompose, RejectsAsymmetric) {
  Matrix a(2, 2);
  a << 1, 2, 0, 1;
  EXPECT_EQ(code_of([&] { decompose_symmetric(a); }), ErrorCode::NotSymmetric);
}

TEST(EstimateGaussian, SingleSampleHasZeroCovariance) {
  const auto s = estimate_gaussian(FeatureBatch(rows({{1.5, -2.0}})));
  EXPECT_EQ(s.mean, Vector((Vector(2) << 1.5, -2.0).finished()));
  EXPECT_EQ(s.covariance, Matrix::Zero(2, 2));
}

TEST(EstimateGaussian, TwoPointExample) {
  const auto s = estimate_gaussian(FeatureBatch(rows({{0, 0}, {2, 0}})));
  EXPECT_DOUBLE_EQ(s.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(s.mean(1), 0.0);
  const double ridge = 1e-6 * 2.0 / 2.0;
  EXPECT_NEAR(s.covariance(0, 0), 2.0 + ridge, 1e-15);
  EXPECT_NEAR(s.covariance(1, 1), ridge, 1e-15);
  EXPECT_EQ(s.covariance(0, 1), 0.0);
}

TEST(EstimateGaussian, MatchesLoopOracle) {
  const RowMatrix x = testutil::gaussian(4, 50, 5);
  const auto s = estimate_gaussian(FeatureBatch(x));
  EXPECT_LT((s.mean - oracle::mean(x)).norm(), 1e-12);
  EXPECT_LT((s.covariance - oracle::ridged(oracle::covariance(x))).norm(), 1e-12);
}

TEST(EstimateGaussian, PermutationInvariant) {
  RowMatrix x = testutil::gaussian(5, 40, 3);
  std::vector<int> order(40);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::rotate(order.begin(), order.begin() + 7, order.end());
  RowMatrix y(40, 3);
  for (int i = 0; i < 40; ++i) y.row(i) = x.row(order[static_cast<std::size_t>(i)]);
  const auto a = estimate_gaussian(FeatureBatch(x));
  const auto b = estimate_gaussian(FeatureBatch(y));
  EXPECT_LT((a.mean - b.mean).norm(), 1e-14);
  EXPECT_LT((a.covariance - b.covariance).norm(), 1e-13);
}

TEST(EstimateGaussian, ShiftChangesOnlyTheMean) {
  const RowMatrix x = testutil::gaussian(6, 100, 4);
  RowMatrix y = x;
  y.rowwise() += Eigen::RowVectorXd::Constant(4, 3.25);
  const auto a = estimate_gaussian(FeatureBatch(x));
  const auto b = estimate_gaussian(FeatureBatch(y));
  EXPECT_LT((a.covariance - b.covariance).norm(), 1e-12);
  EXPECT_LT((b.mean - a.mean - Vector::Constant(4, 3.25)).norm(), 1e-12);
}

TEST(EstimateGaussian, Empty) {
  EXPECT_EQ(code_of([] { estimate_gaussian(FeatureBatch(RowMatrix(0, 2))); }), ErrorCode::EmptyBatch);
}

TEST(Sqrtm, IdentityAndDiagonal) {
  EXPECT_LT((sqrtm_psd(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm(), 1e-14);
  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 4, 9;
  Matrix expected = Matrix::Zero(2, 2);
  expected.diagonal() << 2, 3;
  EXPECT_LT((sqrtm_psd(d) - expected).norm(), 1e-14);
}

TEST(Sqrtm, SquaresBackToRandomPsd) {
  const Matrix a = random_psd(17, 5);
  const Matrix r = sqrtm_psd(a);
  EXPECT_LT((r * r - a).norm() / a.norm(), 1e-8);
  EXPECT_LT((r - oracle::sqrt_psd(a)).norm() / r.norm(), 1e-9);
}

TEST(Sqrtm, ScalesLinearly) {
  const Matrix a = random_psd(18, 5);
  const Matrix r = sqrtm_psd(a);
  for (double c : {0.0, 0.5, 3.0}) {
    const Matrix rc = sqrtm_psd(c * c * a);
    EXPECT_LE((rc - c * r).norm(), 1e-10 * std::max(1.0, (c * r).norm()));
  }
}

TEST(Sqrtm, ClampsRoundingNegatives) {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 1.0, -1e-12;
  const Matrix r = sqrtm_psd(a);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.0);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(Sqrtm, RejectsIndefinite) {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 1.0, -0.5;
  EXPECT_EQ(code_of([&] { sqrtm_psd(a); }), ErrorCode::NotPositiveSemidefinite);
  Matrix b(2, 2);
  b << 1, 1, 0, 1;
  EXPECT_EQ(code_of([&] { sqrtm_psd(b); }), ErrorCode::NotSymmetric);
}

TEST(SpectralRadius, KnownValues) {
  Matrix a(2, 2);
  a << 0.5, 10.0, 0.0, 0.25;  // non-normal, eigenvalues 0.5 and 0.25
  EXPECT_NEAR(spectral_radius(a), 0.5, 1e-6);
  Matrix rot(2, 2);
  rot << 0.0, -0.9, 0.9, 0.0;
  EXPECT_NEAR(spectral_radius(rot), 0.9, 1e-9);
  EXPECT_EQ(spectral_radius(Matrix::Zero(3, 3)), 0.0);
}

TEST(Lyapunov, ScalarClosedForm) {
  const Matrix s = solve_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0));
  EXPECT_NEAR(s(0, 0), 4.0 / 3.0, 1e-10);
}

TEST(Lyapunov, ZeroTransitionReturnsQ) {
  const Matrix q = random_psd(3, 4);
  EXPECT_LT((solve_lyapunov(Matrix::Zero(4, 4), q) - q).norm(), 1e-14 * q.norm());
}

TEST(Lyapunov, DiagonalClosedForm) {
  const Matrix s = solve_lyapunov(0.9 * Matrix::Identity(3, 3), Matrix::Identity(3, 3));
  EXPECT_LT((s - Matrix::Identity(3, 3) / (1.0 - 0.81)).norm(), 1e-8);
  EXPECT_NEAR(s(0, 0), 5.2632, 1e-4);
}

TEST(Lyapunov, MatchesKroneckerSolveAndIsPsd) {
  auto rng = make_engine(21, "lyap");
  const Matrix q0 = random_orthogonal(rng, 5);
  Vector spectrum(5);
  spectrum << 0.8, -0.6, 0.5, 0.2, 0.0;
  Matrix a = q0 * spectrum.asDiagonal() * q0.transpose();
  a(0, 4) += 0.15;  // make it non-normal
  ASSERT_LT(spectral_radius(a), 1.0);
  const Matrix q = random_psd(22, 5);
  const Matrix s = solve_lyapunov(a, q);
  EXPECT_LE((s - (a * s * a.transpose() + q)).norm(), 1e-10 * s.norm());
  EXPECT_LT((s - oracle::lyapunov(a, q)).norm() / s.norm(), 1e-9);
  EXPECT_LT((s - s.transpose()).norm(), 1e-12 * s.norm());
  EXPECT_GE(oracle::jacobi(s).values.minCoeff(), -1e-10 * s.norm());
}

TEST(Lyapunov, RejectsUnstable) {
  EXPECT_EQ(code_of([] { solve_lyapunov(Matrix::Identity(2, 2), Matrix::Identity(2, 2)); }),
            ErrorCode::SpectralRadiusTooLarge);
}

TEST(Lyapunov, IterationCap) {
  EXPECT_EQ(code_of([] {
              solve_lyapunov(Matrix::Constant(1, 1, 0.999), Matrix::Constant(1, 1, 1.0), 10);
            }),
            ErrorCode::NoConvergence);
}
