#pragma once

// Gaussian embedding statistics and the Frechet distance between them, all in
// double precision.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "msn/core/error.hpp"

namespace msn {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

// rows: n x d, row-major.  Unbiased covariance, symmetrized.
inline GaussianStats gaussian_stats(std::span<const double> rows, std::size_t d) {
  if (d == 0 || rows.size() % d != 0) throw ShapeError("gaussian_stats: data is not a multiple of dim " + std::to_string(d));
  const std::size_t n = rows.size() / d;
  if (n < 2) throw InvalidArgument("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      rows.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  GaussianStats s;
  s.count = n;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  return s;
}

inline GaussianStats gaussian_stats(std::span<const float> rows, std::size_t d) {
  std::vector<double> v(rows.begin(), rows.end());
  return gaussian_stats(std::span<const double>(v), d);
}

struct MatrixSqrt {
  Eigen::MatrixXd root;
  std::size_t clamped = 0;  // eigenvalues below zero that were set to zero
};

inline constexpr double kSymmetryTolerance = 1e-8;

// Square root of a symmetric PSD matrix through its eigendecomposition.
// Negative eigenvalues (round-off) are clamped to 0 and counted.
inline MatrixSqrt matrix_sqrt_psd(const Eigen::MatrixXd& m, double symmetry_tol = kSymmetryTolerance) {
  if (m.rows() != m.cols()) throw ShapeError("matrix_sqrt_psd: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale) {
    throw InvalidArgument("matrix_sqrt_psd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericFault("matrix_sqrt_psd: eigendecomposition failed");
  MatrixSqrt out;
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0) {
      lambda[i] = 0.0;
      ++out.clamped;
    }
  }
  out.root = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

struct FrechetResult {
  double distance = 0.0;
  std::size_t clamped_eigenvalues = 0;
  bool clamped_result = false;  // a negative round-off total was set to 0
};

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
inline FrechetResult frechet_distance_detail(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("frechet_distance: dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()) + " differ");
  }
  FrechetResult r;
  const auto s1 = matrix_sqrt_psd(a.covariance);
  Eigen::MatrixXd inner = s1.root * b.covariance * s1.root;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const auto cross = matrix_sqrt_psd(inner);
  r.clamped_eigenvalues = s1.clamped + cross.clamped;
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() -
                   2.0 * cross.root.trace();
  r.distance = d;
  if (d < 0.0) {
    r.distance = 0.0;
    r.clamped_result = true;
  }
  return r;
}

inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  return frechet_distance_detail(a, b).distance;
}

// Mean over all elements of (z - zhat)^2.
inline double reconstruction_error(std::span<const float> z, std::span<const float> zhat) {
  if (z.size() != zhat.size()) {
    throw ShapeError("reconstruction_error: sizes " + std::to_string(z.size()) + " and " +
                     std::to_string(zhat.size()) + " differ");
  }
  if (z.empty()) throw InvalidArgument("reconstruction_error: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z[i]) - static_cast<double>(zhat[i]);
    s += d * d;
  }
  return s / static_cast<double>(z.size());
}

}  // namespace msn
