#ifndef TREELETS_SYM_MATRIX_HPP
#define TREELETS_SYM_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"

namespace treelets {

/// Dense symmetric p x p matrix with single (upper-triangle) storage, so
/// (i,j) and (j,i) always address the same value.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(std::size_t dim) : dim_(dim), data_(dim * (dim + 1) / 2, 0.0) {
    if (dim == 0) throw DimensionError("SymMatrix dimension must be positive");
  }

  static SymMatrix identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
  }

  /// Builds from a full square matrix. The input must be symmetric to within
  /// `tol` (relative to its largest entry) and finite; the upper triangle is kept.
  static SymMatrix from_dense(const Eigen::MatrixXd& full, double tol = 1e-12) {
    if (full.rows() != full.cols() || full.rows() == 0)
      throw DimensionError("SymMatrix::from_dense needs a non-empty square matrix");
    if (!full.allFinite()) throw InvalidDataError("SymMatrix::from_dense: non-finite entry");
    const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
    const auto p = static_cast<std::size_t>(full.rows());
    SymMatrix m(p);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = i; j < p; ++j) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        if (std::abs(full(ii, jj) - full(jj, ii)) > tol * scale)
          throw InvalidDataError("SymMatrix::from_dense: input is not symmetric");
        m.set(i, j, full(ii, jj));
      }
    }
    return m;
  }

  static SymMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    const auto p = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd full(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != p)
        throw DimensionError("SymMatrix::from_rows: ragged input");
      for (Eigen::Index j = 0; j < p; ++j) full(i, j) = rows[i][j];
    }
    return from_dense(full);
  }

  std::size_t dim() const noexcept { return dim_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[offset(i, j)]; }

  void set(std::size_t i, std::size_t j, double value) {
    if (!std::isfinite(value)) throw InvalidDataError("SymMatrix: non-finite entry");
    data_[offset(i, j)] = value;
  }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) s += (*this)(i, j) * (*this)(i, j);
    }
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  Eigen::MatrixXd to_dense() const {
    const auto p = static_cast<Eigen::Index>(dim_);
    Eigen::MatrixXd full(p, p);
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j)
        full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(i, j);
    }
    return full;
  }

  /// True when the diagonal is exactly 1 and off-diagonal entries lie in [-1, 1].
  bool is_correlation() const {
    for (std::size_t i = 0; i < dim_; ++i) {
      if ((*this)(i, i) != 1.0) return false;
      for (std::size_t j = i + 1; j < dim_; ++j) {
        if (std::abs((*this)(i, j)) > 1.0) return false;
      }
    }
    return true;
  }

  bool operator==(const SymMatrix&) const = default;

 private:
  std::size_t offset(std::size_t i, std::size_t j) const {
    if (i >= dim_ || j >= dim_)
      throw IndexError("SymMatrix index (" + std::to_string(i) + "," + std::to_string(j) +
                       ") out of range for dimension " + std::to_string(dim_));
    if (i > j) std::swap(i, j);
    // Row-major packed upper triangle.
    return i * dim_ - (i * (i + 1)) / 2 + j;
  }

  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Largest absolute entrywise difference between two matrices of equal size.
inline double max_abs_diff(const SymMatrix& a, const SymMatrix& b) {
  if (a.dim() != b.dim()) throw DimensionError("max_abs_diff: dimension mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = i; j < a.dim(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  }
  return m;
}

}  // namespace treelets

#endif  // TREELETS_SYM_MATRIX_HPP
