#ifndef TREELETS_TREELET_HPP
#define TREELETS_TREELET_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"
#include "treelets/linalg.hpp"
#include "treelets/sym_matrix.hpp"

namespace treelets {

enum class PairScore { correlation, covariance };

struct TreeletOptions {
  /// Number of merges; unset means the full tree (p - 1).
  std::optional<std::size_t> max_level;
  PairScore score = PairScore::correlation;
  double tie_tolerance = 1e-12;
};

/// One merge of the tree. `level` is 1-based; indices are 0-based.
struct TreeletStep {
  std::size_t level = 0;
  linalg::JacobiRotation rotation;
  std::size_t sum_index = 0;
  std::size_t diff_index = 0;
  /// Winning pair score at this level.
  double score = 0.0;
  /// (i, j) entry of the rotated running covariance before it is zeroed.
  double offdiag_residual = 0.0;

  bool operator==(const TreeletStep&) const = default;
};

struct TreeletModel {
  std::size_t dim = 0;
  std::size_t max_level = 0;
  std::vector<TreeletStep> steps;
  /// active_sets[l] holds the sorted sum indices still active after level l;
  /// active_sets[0] is every coordinate.
  std::vector<std::vector<std::size_t>> active_sets;
  /// Levels whose best and runner-up scores were within the tie tolerance.
  std::vector<std::size_t> tie_log;

  bool operator==(const TreeletModel&) const = default;
};

namespace detail {

inline double pair_score(const SymMatrix& cov, std::size_t i, std::size_t j, PairScore kind) {
  if (kind == PairScore::covariance) return std::abs(cov(i, j));
  return std::abs(cov(i, j)) / std::sqrt(cov(i, i) * cov(j, j));
}

inline std::vector<std::vector<std::size_t>> active_sets_from_steps(
    std::size_t dim, const std::vector<TreeletStep>& steps) {
  std::vector<std::vector<std::size_t>> sets;
  std::vector<std::size_t> active(dim);
  for (std::size_t k = 0; k < dim; ++k) active[k] = k;
  sets.push_back(active);
  for (const auto& step : steps) {
    active.erase(std::remove(active.begin(), active.end(), step.diff_index), active.end());
    sets.push_back(active);
  }
  return sets;
}

}  // namespace detail

/// Greedy treelet construction: at each level the active pair with the largest
/// score is Jacobi-rotated, the larger-variance coordinate stays active and the
/// other is frozen. Ties within `tie_tolerance` go to the lexicographically
/// smallest (i, j) and are recorded in `tie_log`.
inline TreeletModel build_treelet(const SymMatrix& sigma, const TreeletOptions& options = {}) {
  const std::size_t p = sigma.dim();
  if (p < 2) throw DimensionError("build_treelet needs at least 2 variables");
  const std::size_t levels = options.max_level.value_or(p - 1);
  if (levels < 1 || levels > p - 1)
    throw IndexError("build_treelet: max_level must lie in 1.." + std::to_string(p - 1));
  for (std::size_t k = 0; k < p; ++k) {
    if (!(sigma(k, k) > linalg::kVarianceFloor)) throw DegenerateVarianceError(k);
  }

  TreeletModel model;
  model.dim = p;
  model.max_level = levels;

  SymMatrix cov = sigma;
  std::vector<std::size_t> active(p);
  for (std::size_t k = 0; k < p; ++k) active[k] = k;
  model.active_sets.push_back(active);

  const double tol = options.tie_tolerance;
  for (std::size_t level = 1; level <= levels; ++level) {
    double best = -1.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b)
        best = std::max(best, detail::pair_score(cov, active[a], active[b], options.score));
    }
    std::size_t bi = 0;
    std::size_t bj = 0;
    bool chosen = false;
    double runner_up = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double s = detail::pair_score(cov, active[a], active[b], options.score);
        if (!chosen && s >= best - tol) {
          bi = active[a];
          bj = active[b];
          chosen = true;
        } else {
          runner_up = std::max(runner_up, s);
        }
      }
    }
    const double winner = detail::pair_score(cov, bi, bj, options.score);
    if (winner - runner_up <= tol) model.tie_log.push_back(level);

    const linalg::JacobiRotation rot = linalg::jacobi_angle(cov, bi, bj);
    TreeletStep step;
    step.level = level;
    step.rotation = rot;
    step.score = winner;
    step.offdiag_residual = linalg::rotated_offdiag(cov, rot);
    cov = linalg::apply_rotation(cov, rot);
    cov.set(bi, bj, 0.0);
    if (cov(bj, bj) > cov(bi, bi)) {
      step.sum_index = bj;
      step.diff_index = bi;
    } else {
      step.sum_index = bi;
      step.diff_index = bj;
    }
    active.erase(std::remove(active.begin(), active.end(), step.diff_index), active.end());
    model.active_sets.push_back(active);
    model.steps.push_back(step);
  }
  return model;
}

inline void check_level(const TreeletModel& model, std::size_t level) {
  if (level > model.max_level)
    throw IndexError("level " + std::to_string(level) + " exceeds max level " +
                     std::to_string(model.max_level));
}

/// Coordinates of x in the level-`level` basis (rotations 1..level applied in order).
inline Eigen::VectorXd transform(const TreeletModel& model, const Eigen::VectorXd& x,
                                 std::size_t level) {
  check_level(model, level);
  if (static_cast<std::size_t>(x.size()) != model.dim)
    throw DimensionError("transform: vector length does not match model dimension");
  Eigen::VectorXd out = x;
  for (std::size_t l = 0; l < level; ++l) linalg::rotate_vector(out, model.steps[l].rotation);
  return out;
}

inline Eigen::VectorXd inverse_transform(const TreeletModel& model, const Eigen::VectorXd& coeffs,
                                         std::size_t level) {
  check_level(model, level);
  if (static_cast<std::size_t>(coeffs.size()) != model.dim)
    throw DimensionError("inverse_transform: vector length does not match model dimension");
  Eigen::VectorXd out = coeffs;
  for (std::size_t l = level; l-- > 0;) linalg::unrotate_vector(out, model.steps[l].rotation);
  return out;
}

/// Transforms every row of an n x p data matrix.
inline Eigen::MatrixXd transform_rows(const TreeletModel& model, const Eigen::MatrixXd& data,
                                      std::size_t level) {
  check_level(model, level);
  if (static_cast<std::size_t>(data.cols()) != model.dim)
    throw DimensionError("transform_rows: column count does not match model dimension");
  Eigen::MatrixXd out = data;
  for (std::size_t l = 0; l < level; ++l) linalg::rotate_columns(out, model.steps[l].rotation);
  return out;
}

/// Orthonormal basis whose row k dotted with x gives coordinate k of transform(x).
inline Eigen::MatrixXd basis_at_level(const TreeletModel& model, std::size_t level) {
  check_level(model, level);
  const auto p = static_cast<Eigen::Index>(model.dim);
  // B = R_level ... R_1; rotating the columns of B^T = I row-wise gives B^T.
  Eigen::MatrixXd bt = Eigen::MatrixXd::Identity(p, p);
  for (std::size_t l = 0; l < level; ++l) linalg::rotate_columns(bt, model.steps[l].rotation);
  return bt.transpose();
}

/// Covariance of the level-`level` coordinates, obtained by replaying the
/// stored rotations on sigma.
inline SymMatrix rotated_covariance(const TreeletModel& model, const SymMatrix& sigma,
                                    std::size_t level) {
  check_level(model, level);
  if (sigma.dim() != model.dim) throw DimensionError("rotated_covariance: dimension mismatch");
  SymMatrix cov = sigma;
  for (std::size_t l = 0; l < level; ++l) {
    const auto& r = model.steps[l].rotation;
    cov = linalg::apply_rotation(cov, r);
    cov.set(r.i, r.j, 0.0);
  }
  return cov;
}

/// Same merge order and sum/difference roles, with rotation cosines and sines
/// agreeing to `angle_tol`. Exact equality is `operator==`.
inline bool same_tree(const TreeletModel& a, const TreeletModel& b, double angle_tol = 1e-9) {
  if (a.dim != b.dim || a.max_level != b.max_level || a.steps.size() != b.steps.size())
    return false;
  for (std::size_t l = 0; l < a.steps.size(); ++l) {
    const auto& x = a.steps[l];
    const auto& y = b.steps[l];
    if (x.rotation.i != y.rotation.i || x.rotation.j != y.rotation.j ||
        x.sum_index != y.sum_index || x.diff_index != y.diff_index)
      return false;
    if (std::abs(x.rotation.c - y.rotation.c) > angle_tol ||
        std::abs(x.rotation.s - y.rotation.s) > angle_tol)
      return false;
  }
  return true;
}

}  // namespace treelets

#endif  // TREELETS_TREELET_HPP
