#ifndef TREELETS_LINALG_HPP
#define TREELETS_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"
#include "treelets/sym_matrix.hpp"

namespace treelets::linalg {

/// Diagonal entries at or below this are treated as zero variance.
inline constexpr double kVarianceFloor = 1e-12;

/// Plane rotation in coordinates (i, j), i < j. Applied to a vector x it
/// produces x'_i = c x_i + s x_j and x'_j = -s x_i + c x_j.
struct JacobiRotation {
  std::size_t i = 0;
  std::size_t j = 1;
  double c = 1.0;
  double s = 0.0;

  double angle() const { return std::atan2(s, c); }
  bool operator==(const JacobiRotation&) const = default;
};

inline void check_finite(const Eigen::MatrixXd& data) {
  if (!data.allFinite()) throw InvalidDataError("data contains non-finite values");
}

/// Unbiased (n - 1 divisor) sample covariance of the columns of an n x p matrix.
inline SymMatrix sample_covariance(const Eigen::MatrixXd& data) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (n < 2) throw InsufficientDataError("sample_covariance needs at least 2 rows");
  if (p < 1) throw DimensionError("sample_covariance needs at least 1 column");
  check_finite(data);
  // Shifting by the first row first keeps constant columns exactly zero.
  const Eigen::MatrixXd shifted = data.rowwise() - data.row(0);
  const Eigen::RowVectorXd mean = shifted.colwise().mean();
  const Eigen::MatrixXd centered = shifted.rowwise() - mean;
  const Eigen::MatrixXd cross = centered.transpose() * centered;
  SymMatrix out(static_cast<std::size_t>(p));
  const double denom = static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j)
      out.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), cross(i, j) / denom);
  }
  return out;
}

inline SymMatrix correlation_from_covariance(const SymMatrix& sigma) {
  const std::size_t p = sigma.dim();
  std::vector<double> sd(p);
  for (std::size_t i = 0; i < p; ++i) {
    if (!(sigma(i, i) > kVarianceFloor)) throw DegenerateVarianceError(i);
    sd[i] = std::sqrt(sigma(i, i));
  }
  SymMatrix out(p);
  for (std::size_t i = 0; i < p; ++i) {
    out.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < p; ++j)
      out.set(i, j, std::clamp(sigma(i, j) / (sd[i] * sd[j]), -1.0, 1.0));
  }
  return out;
}

/// Off-diagonal (i, j) entry that R sigma R^T would carry for the given rotation.
inline double rotated_offdiag(const SymMatrix& sigma, const JacobiRotation& r) {
  const double a = sigma(r.i, r.i);
  const double b = sigma(r.i, r.j);
  const double d = sigma(r.j, r.j);
  return (r.c * r.c - r.s * r.s) * b - r.c * r.s * (a - d);
}

/// R sigma R^T for a plane rotation. Only rows/columns i and j change.
inline SymMatrix apply_rotation(const SymMatrix& sigma, const JacobiRotation& r) {
  const std::size_t p = sigma.dim();
  if (r.i >= r.j || r.j >= p) throw IndexError("apply_rotation: need i < j < p");
  SymMatrix out = sigma;
  const double c = r.c;
  const double s = r.s;
  for (std::size_t k = 0; k < p; ++k) {
    if (k == r.i || k == r.j) continue;
    const double ski = sigma(k, r.i);
    const double skj = sigma(k, r.j);
    out.set(k, r.i, c * ski + s * skj);
    out.set(k, r.j, -s * ski + c * skj);
  }
  const double a = sigma(r.i, r.i);
  const double b = sigma(r.i, r.j);
  const double d = sigma(r.j, r.j);
  out.set(r.i, r.i, c * c * a + 2.0 * c * s * b + s * s * d);
  out.set(r.j, r.j, s * s * a - 2.0 * c * s * b + c * c * d);
  out.set(r.i, r.j, rotated_offdiag(sigma, r));
  return out;
}

/// Rotation angle that zeroes sigma(i, j), folded into [-pi/4, pi/4].
inline JacobiRotation jacobi_angle(const SymMatrix& sigma, std::size_t i, std::size_t j) {
  const double b = sigma(i, j);
  if (b == 0.0) return {i, j, 1.0, 0.0};
  double theta = 0.5 * std::atan2(2.0 * b, sigma(i, i) - sigma(j, j));
  constexpr double quarter = std::numbers::pi / 4.0;
  if (theta > quarter) {
    theta -= 2.0 * quarter;
  } else if (theta < -quarter) {
    theta += 2.0 * quarter;
  }
  return {i, j, std::cos(theta), std::sin(theta)};
}

/// Rotates the (i, j) plane so that the (i, j) entry vanishes. Indices are
/// 0-based and must satisfy i < j < p. The returned matrix carries an exact
/// zero at (i, j).
inline std::pair<JacobiRotation, SymMatrix> jacobi_rotate(const SymMatrix& sigma, std::size_t i,
                                                          std::size_t j) {
  if (i == j) throw IndexError("jacobi_rotate: i and j must differ");
  if (i > j || j >= sigma.dim()) throw IndexError("jacobi_rotate: need i < j < p");
  const JacobiRotation r = jacobi_angle(sigma, i, j);
  SymMatrix out = apply_rotation(sigma, r);
  out.set(i, j, 0.0);
  return {r, std::move(out)};
}

/// Applies x' = R x in place to a vector.
inline void rotate_vector(Eigen::Ref<Eigen::VectorXd> x, const JacobiRotation& r) {
  const auto i = static_cast<Eigen::Index>(r.i);
  const auto j = static_cast<Eigen::Index>(r.j);
  const double xi = x(i);
  const double xj = x(j);
  x(i) = r.c * xi + r.s * xj;
  x(j) = -r.s * xi + r.c * xj;
}

/// Applies x' = R^T x in place (the inverse rotation).
inline void unrotate_vector(Eigen::Ref<Eigen::VectorXd> x, const JacobiRotation& r) {
  const auto i = static_cast<Eigen::Index>(r.i);
  const auto j = static_cast<Eigen::Index>(r.j);
  const double xi = x(i);
  const double xj = x(j);
  x(i) = r.c * xi - r.s * xj;
  x(j) = r.s * xi + r.c * xj;
}

/// Rotates columns i, j of a data matrix, i.e. each row x becomes R x.
inline void rotate_columns(Eigen::MatrixXd& data, const JacobiRotation& r) {
  const auto i = static_cast<Eigen::Index>(r.i);
  const auto j = static_cast<Eigen::Index>(r.j);
  const Eigen::VectorXd ci = data.col(i);
  const Eigen::VectorXd cj = data.col(j);
  data.col(i) = r.c * ci + r.s * cj;
  data.col(j) = -r.s * ci + r.c * cj;
}

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Eigen::MatrixXd vectors;     // column k pairs with values[k]
};

/// Reference symmetric eigensolver (Eigen's self-adjoint QR), eigenvalues
/// sorted in descending order.
inline EigenDecomposition reference_eigh(const SymMatrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma.to_dense());
  if (solver.info() != Eigen::Success) throw InvalidDataError("reference_eigh did not converge");
  const Eigen::Index p = static_cast<Eigen::Index>(sigma.dim());
  EigenDecomposition out;
  out.values.resize(sigma.dim());
  out.vectors.resize(p, p);
  // Eigen returns ascending order.
  for (Eigen::Index k = 0; k < p; ++k) {
    out.values[static_cast<std::size_t>(k)] = solver.eigenvalues()(p - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(p - 1 - k);
  }
  return out;
}

/// Ordinary least squares with an intercept.
struct LinearFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const {
    return (features * coefficients).array() + intercept;
  }
};

/// Least-squares fit of y on [1, features]. Throws SingularFitError when the
/// design is rank deficient (relative pivot threshold 1e-10).
inline LinearFit fit_ols(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k = features.cols();
  if (y.size() != n) throw DimensionError("fit_ols: row count mismatch");
  if (n < k + 1) throw SingularFitError("fit_ols: fewer rows than parameters");
  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = features;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k + 1) throw SingularFitError("fit_ols: design matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);
  LinearFit fit;
  fit.intercept = beta(0);
  fit.coefficients = beta.tail(k);
  return fit;
}

inline double mean_squared_error(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size() || y.size() == 0)
    throw DimensionError("mean_squared_error: size mismatch");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

/// Sample correlation of two equally sized vectors; 0 when either is constant.
inline double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double denom = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  if (!(denom > 0.0)) return 0.0;
  return ac.dot(bc) / denom;
}

/// Walks `order` and keeps columns of `candidates` that are not numerically in
/// the span of the intercept and the columns kept so far, stopping at `limit`.
/// A column is rejected when its residual norm falls below `rel_tol` times its
/// centered norm.
inline std::vector<std::size_t> select_independent(const Eigen::MatrixXd& candidates,
                                                   const std::vector<std::size_t>& order,
                                                   std::size_t limit, double rel_tol = 1e-8) {
  std::vector<std::size_t> kept;
  std::vector<Eigen::VectorXd> basis;  // orthonormal, all orthogonal to the constant
  for (std::size_t idx : order) {
    if (kept.size() >= limit) break;
    Eigen::VectorXd v = candidates.col(static_cast<Eigen::Index>(idx));
    v.array() -= v.mean();
    const double norm0 = v.norm();
    if (!(norm0 > 0.0)) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) v -= q.dot(v) * q;
    }
    const double norm = v.norm();
    if (norm <= rel_tol * norm0) continue;
    basis.push_back(v / norm);
    kept.push_back(idx);
  }
  return kept;
}

}  // namespace treelets::linalg

#endif  // TREELETS_LINALG_HPP
