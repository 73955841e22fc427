#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "gmc/core.hpp"
#include "gmc/error.hpp"

namespace gmc {

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending,
/// eigenvectors as orthonormal columns in matching order.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
};

namespace detail {

inline double asymmetry(const Matrix& a) {
  const double norm = a.norm();
  if (norm == 0.0) return 0.0;
  return (a - a.transpose()).norm() / norm;
}

}  // namespace detail

inline SpectralDecomposition decompose_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) {
    fail(ErrorCode::DimensionMismatch, "matrix is not square");
  }
  if (detail::asymmetry(a) > 1e-9) {
    fail(ErrorCode::NotSymmetric, "matrix asymmetry exceeds 1e-9 relative");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    fail(ErrorCode::DecompositionFailure, "symmetric eigensolver did not converge");
  }
  // Eigen returns ascending order.
  const Eigen::Index n = sym.rows();
  SpectralDecomposition out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
    out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

/// Unbiased sample covariance (divide by N-1) without any ridge; zero for N = 1.
inline Matrix sample_covariance(const RowMatrix& data) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 2) return Matrix::Zero(d, d);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const RowMatrix centered = data.rowwise() - mean;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return 0.5 * (cov + cov.transpose());
}

/// Column means and unbiased covariance, symmetrized and ridge-regularized by
/// eps*I with eps = 1e-6 * trace / D.
inline GaussianSummary estimate_gaussian(const FeatureBatch& batch) {
  if (batch.size() < 1 || batch.dim() < 1) {
    fail(ErrorCode::EmptyBatch, "cannot estimate a Gaussian from an empty batch");
  }
  GaussianSummary out;
  out.mean = batch.data().colwise().mean().transpose();
  out.covariance = sample_covariance(batch.data());
  const double ridge = 1e-6 * out.covariance.trace() / static_cast<double>(batch.dim());
  out.covariance.diagonal().array() += ridge;
  return out;
}

/// Symmetric PSD square root V diag(sqrt(max(lambda, 0))) V^T.
/// Eigenvalues down to -1e-8 * lambda_max are treated as rounding noise.
inline Matrix sqrtm_psd(const Matrix& a) {
  const SpectralDecomposition eig = decompose_symmetric(a);
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);
  const double largest = std::max(eig.eigenvalues(0), 0.0);
  Vector roots(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = eig.eigenvalues(i);
    if (lambda < -1e-8 * largest && lambda < -1e-300) {
      fail(ErrorCode::NotPositiveSemidefinite,
           "eigenvalue " + std::to_string(lambda) + " below clamping tolerance");
    }
    roots(i) = std::sqrt(std::max(lambda, 0.0));
  }
  Matrix r = eig.eigenvectors * roots.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (r + r.transpose());
}

/// Spectral radius estimate from Gelfand's formula ||A^m||^(1/m), with m
/// doubled by repeated squaring (renormalized each step to avoid overflow).
inline double spectral_radius(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorCode::DimensionMismatch, "matrix is not square");
  if (a.size() == 0) return 0.0;
  Matrix power = a;
  double log_scale = 0.0;  // log of the factor removed from power so far
  double exponent = 1.0;
  double estimate = a.norm();
  for (int k = 0; k < 40; ++k) {
    const double norm = power.norm();
    if (norm == 0.0) return 0.0;
    estimate = std::exp((std::log(norm) + log_scale) / exponent);
    power /= norm;
    log_scale += std::log(norm);
    power = power * power;
    log_scale *= 2.0;
    exponent *= 2.0;
  }
  return estimate;
}

/// Stationary covariance of x' = A x + noise(Q): the fixed point of
/// S = A S A^T + Q by plain iteration from S = Q.
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& q, int max_iterations = 100000) {
  if (a.rows() != a.cols() || q.rows() != q.cols() || a.rows() != q.rows()) {
    fail(ErrorCode::DimensionMismatch, "Lyapunov operands must be square and of equal size");
  }
  const double rho = spectral_radius(a);
  if (!(rho < 1.0 - 1e-6)) {
    fail(ErrorCode::SpectralRadiusTooLarge,
         "spectral radius " + std::to_string(rho) + " is not below 1 - 1e-6");
  }
  Matrix sigma = 0.5 * (q + q.transpose());
  for (int it = 0; it < max_iterations; ++it) {
    Matrix next = a * sigma * a.transpose() + q;
    next = 0.5 * (next + next.transpose());
    const double step = (next - sigma).norm();
    sigma = std::move(next);
    if (step <= 1e-11 * sigma.norm() || sigma.norm() == 0.0) return sigma;
  }
  fail(ErrorCode::NoConvergence, "Lyapunov iteration did not converge in " +
                                     std::to_string(max_iterations) + " iterations");
}

}  // namespace gmc
