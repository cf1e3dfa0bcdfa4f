#ifndef TREELETS_EIV_BENCH_HPP
#define TREELETS_EIV_BENCH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"
#include "treelets/linalg.hpp"
#include "treelets/treelet.hpp"

namespace treelets::eiv {

/// Errors-in-variables model: Y = gamma Z + eps, X_i = c Z + eta_i with
/// Z, eps ~ N(0, 1) and eta_i ~ N(0, noise_vars[i]), all independent.
struct EivSpec {
  std::size_t p = 1;
  double gamma = 1.0;
  double c = 1.0;
  std::vector<double> noise_vars;

  static EivSpec isotropic(std::size_t p, double gamma, double c, double noise_var = 1.0) {
    return {p, gamma, c, std::vector<double>(p, noise_var)};
  }

  void validate() const {
    if (p < 1) throw InvalidDataError("EivSpec: p must be positive");
    if (noise_vars.size() != p) throw DimensionError("EivSpec: need p noise variances");
    if (!std::isfinite(gamma) || !std::isfinite(c))
      throw InvalidDataError("EivSpec: gamma and c must be finite");
    for (double v : noise_vars) {
      if (!std::isfinite(v) || !(v > 0.0))
        throw InvalidDataError("EivSpec: noise variances must be finite and positive");
    }
  }

  /// S = sum_i 1 / sigma_i^2.
  double precision_sum() const {
    double s = 0.0;
    for (double v : noise_vars) s += 1.0 / v;
    return s;
  }
};

struct EivSample {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }

  /// Rows [begin, begin + count).
  EivSample rows(std::size_t begin, std::size_t count) const {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto k = static_cast<Eigen::Index>(count);
    return {y.segment(b, k), X.middleRows(b, k)};
  }
};

/// Per replicate the draw order is Z, eps, eta_1..eta_p.
inline EivSample sample_eiv(const EivSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InsufficientDataError("sample_eiv: n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> sd(spec.p);
  for (std::size_t i = 0; i < spec.p; ++i) sd[i] = std::sqrt(spec.noise_vars[i]);
  EivSample out{Eigen::VectorXd(static_cast<Eigen::Index>(n)),
                Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.p))};
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(n); ++r) {
    const double z = g(rng);
    const double eps = g(rng);
    out.y(r) = spec.gamma * z + eps;
    for (std::size_t i = 0; i < spec.p; ++i)
      out.X(r, static_cast<Eigen::Index>(i)) = spec.c * z + sd[i] * g(rng);
  }
  return out;
}

/// E[Y | X = x] = gamma c / (1 + c^2 S) * sum_i x_i / sigma_i^2.
inline double oracle_predict(const EivSpec& spec, const Eigen::VectorXd& x) {
  spec.validate();
  if (static_cast<std::size_t>(x.size()) != spec.p)
    throw DimensionError("oracle_predict: x must have length p");
  const double s = spec.precision_sum();
  double weighted = 0.0;
  for (std::size_t i = 0; i < spec.p; ++i) weighted += x(static_cast<Eigen::Index>(i)) / spec.noise_vars[i];
  return spec.gamma * spec.c / (1.0 + spec.c * spec.c * s) * weighted;
}

inline Eigen::VectorXd oracle_predict_rows(const EivSpec& spec, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = oracle_predict(spec, X.row(r).transpose());
  return out;
}

/// Bayes risk gamma^2 / (1 + c^2 S) + 1.
inline double oracle_mse(const EivSpec& spec) {
  spec.validate();
  return spec.gamma * spec.gamma / (1.0 + spec.c * spec.c * spec.precision_sum()) + 1.0;
}

/// Test errors of one method. For a single evaluation `mses` has one entry and
/// `se` is the standard error over test observations; for an aggregate over
/// replicates `se` is the sample sd of `mses` over sqrt(replicates).
struct MethodResult {
  std::string method;
  std::string mode;
  std::vector<double> mses;
  double mean = 0.0;
  double se = 0.0;

  std::size_t replicates() const { return mses.size(); }
};

inline double standard_error(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

inline MethodResult summarize(std::string method, std::string mode, std::vector<double> mses) {
  MethodResult r{std::move(method), std::move(mode), std::move(mses), 0.0, 0.0};
  if (!r.mses.empty())
    r.mean = std::accumulate(r.mses.begin(), r.mses.end(), 0.0) / static_cast<double>(r.mses.size());
  r.se = standard_error(r.mses);
  return r;
}

inline MethodResult score_predictions(std::string method, std::string mode, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& yhat) {
  const Eigen::ArrayXd sq = (y - yhat).array().square();
  std::vector<double> per_obs(sq.data(), sq.data() + sq.size());
  MethodResult r{std::move(method), std::move(mode), {sq.mean()}, sq.mean(), standard_error(per_obs)};
  return r;
}

inline MethodResult oracle_regress(const EivSpec& spec, const EivSample& test) {
  return score_predictions("oracle", "", test.y, oracle_predict_rows(spec, test.X));
}

/// Principal-component regression: least squares of y on the top-q principal
/// component scores of the training covariance, plus an intercept.
inline MethodResult pca_regress(const EivSample& train, const EivSample& test, std::size_t q = 1) {
  const auto p = static_cast<std::size_t>(train.X.cols());
  if (q < 1 || q > p) throw InvalidDataError("pca_regress: q must lie in 1..p");
  if (train.size() < q + 2) throw InsufficientDataError("pca_regress: need n >= q + 2");
  if (test.X.cols() != train.X.cols()) throw DimensionError("pca_regress: column mismatch");
  const auto eig = linalg::reference_eigh(linalg::sample_covariance(train.X));
  const Eigen::MatrixXd components = eig.vectors.leftCols(static_cast<Eigen::Index>(q));
  const Eigen::RowVectorXd mean = train.X.colwise().mean();
  const Eigen::MatrixXd train_scores = (train.X.rowwise() - mean) * components;
  const Eigen::MatrixXd test_scores = (test.X.rowwise() - mean) * components;
  const auto fit = linalg::fit_ols(train_scores, train.y);
  return score_predictions("pca", "", test.y, fit.predict(test_scores));
}

enum class LevelMode { single_level, union_levels };

inline std::string to_string(LevelMode m) {
  return m == LevelMode::single_level ? "single_level" : "union";
}

struct TreeletRegressOptions {
  LevelMode mode = LevelMode::single_level;
  /// single_level only; unset selects the level on a held-out tail of the training rows.
  std::optional<std::size_t> level;
  std::size_t k_features = 1;
  double holdout_fraction = 0.2;
};

namespace detail {

/// Candidate treelet coordinates. single_level: the p level-`level`
/// coordinates. union: the p raw coordinates followed by the two coordinates
/// rewritten at each level, so each distinct rotation path appears once.
inline Eigen::MatrixXd treelet_candidates(const TreeletModel& model, const Eigen::MatrixXd& X,
                                          LevelMode mode, std::size_t level) {
  if (mode == LevelMode::single_level) return transform_rows(model, X, level);
  const auto p = static_cast<Eigen::Index>(model.dim);
  const auto extra = static_cast<Eigen::Index>(2 * model.steps.size());
  Eigen::MatrixXd out(X.rows(), p + extra);
  Eigen::MatrixXd running = X;
  out.leftCols(p) = X;
  Eigen::Index col = p;
  for (const auto& step : model.steps) {
    linalg::rotate_columns(running, step.rotation);
    out.col(col++) = running.col(static_cast<Eigen::Index>(step.rotation.i));
    out.col(col++) = running.col(static_cast<Eigen::Index>(step.rotation.j));
  }
  return out;
}

/// Candidate columns ranked by |correlation with y|, dropping near-constant
/// and linearly dependent columns, capped at k.
inline std::vector<std::size_t> screen_features(const Eigen::MatrixXd& candidates,
                                                const Eigen::VectorXd& y, std::size_t k) {
  const auto m = static_cast<std::size_t>(candidates.cols());
  std::vector<double> var(m);
  double max_var = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::VectorXd col = candidates.col(static_cast<Eigen::Index>(j));
    var[j] = (col.array() - col.mean()).square().sum();
    max_var = std::max(max_var, var[j]);
  }
  std::vector<double> score(m, 0.0);
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < m; ++j) {
    if (!(var[j] > linalg::kVarianceFloor * max_var)) continue;
    score[j] = std::abs(linalg::correlation(candidates.col(static_cast<Eigen::Index>(j)), y));
    order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return linalg::select_independent(candidates, order, k);
}

inline Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

/// Fits on `train` with a treelet built from its covariance; returns test MSE.
inline double treelet_fit_mse(const TreeletModel& model, const EivSample& train, const EivSample& test,
                              LevelMode mode, std::size_t level, std::size_t k,
                              Eigen::VectorXd* predictions = nullptr) {
  const Eigen::MatrixXd train_cand = treelet_candidates(model, train.X, mode, level);
  const auto chosen = screen_features(train_cand, train.y, k);
  if (chosen.empty()) throw SingularFitError("treelet_regress: no usable features");
  const auto fit = linalg::fit_ols(take_columns(train_cand, chosen), train.y);
  const Eigen::MatrixXd test_cand = treelet_candidates(model, test.X, mode, level);
  Eigen::VectorXd yhat = fit.predict(take_columns(test_cand, chosen));
  const double mse = linalg::mean_squared_error(test.y, yhat);
  if (predictions) *predictions = std::move(yhat);
  return mse;
}

}  // namespace detail

/// Regression on treelet coordinates of the training covariance, either from a
/// single level or from the union of all levels. Candidates are screened by
/// absolute correlation with y and the top `k_features` enter a least-squares
/// fit with intercept.
inline MethodResult treelet_regress(const EivSample& train, const EivSample& test,
                                    const TreeletRegressOptions& options = {}) {
  if (test.X.cols() != train.X.cols()) throw DimensionError("treelet_regress: column mismatch");
  if (options.k_features < 1) throw InvalidDataError("treelet_regress: k_features must be positive");
  const auto p = static_cast<std::size_t>(train.X.cols());
  const std::size_t available =
      options.mode == LevelMode::single_level ? p : p + 2 * (p - 1);
  if (options.k_features > available)
    throw InvalidDataError("treelet_regress: k_features exceeds the candidate count");
  if (train.size() < options.k_features + 2)
    throw InsufficientDataError("treelet_regress: too few training rows");

  const TreeletModel model = build_treelet(linalg::sample_covariance(train.X));
  std::size_t level = 0;
  if (options.mode == LevelMode::single_level) {
    if (options.level) {
      level = *options.level;
    } else {
      if (!(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0))
        throw InvalidDataError("treelet_regress: holdout_fraction must lie in (0, 1)");
      const auto n = train.size();
      const auto n_hold = static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.holdout_fraction));
      const std::size_t n_fit = n - n_hold;
      if (n_hold < 1 || n_fit < options.k_features + 2)
        throw InsufficientDataError("treelet_regress: too few rows for level selection");
      const EivSample fit_part = train.rows(0, n_fit);
      const EivSample hold_part = train.rows(n_fit, n_hold);
      const TreeletModel sub = build_treelet(linalg::sample_covariance(fit_part.X));
      double best = std::numeric_limits<double>::infinity();
      bool found = false;
      for (std::size_t l = 0; l <= sub.max_level; ++l) {
        try {
          const double risk = detail::treelet_fit_mse(sub, fit_part, hold_part, LevelMode::single_level,
                                                      l, options.k_features);
          if (risk < best) {
            best = risk;
            level = l;
            found = true;
          }
        } catch (const SingularFitError&) {
        }
      }
      if (!found) throw SingularFitError("treelet_regress: no level admits a fit");
    }
  }
  Eigen::VectorXd yhat;
  detail::treelet_fit_mse(model, train, test, options.mode, level, options.k_features, &yhat);
  return score_predictions("treelet", to_string(options.mode), test.y, yhat);
}

/// One row of a c_p sweep. Missing mean/se mark a cell with fewer than two
/// successful replicates.
struct SweepRow {
  double c = 0.0;
  std::string method;
  std::string mode;
  std::optional<double> mse_mean;
  std::optional<double> mse_se;
  std::size_t replicates = 0;
  /// Per-replicate MSEs of the successful replicates.
  std::vector<double> mses;
};

struct SweepOptions {
  std::size_t q = 1;
  std::size_t k_features = 1;
};

/// Default grid multipliers; the swept values are these times p^(-1/2).
inline std::vector<double> default_grid_multipliers() { return {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}; }

/// For every c and replicate r, draws n_train + n_test rows with seed
/// `seed + r` and scores oracle, PCA and both treelet modes on the test part.
inline std::vector<SweepRow> sweep_cp(const EivSpec& base_spec, const std::vector<double>& c_grid,
                                      std::size_t n_train, std::size_t n_test, std::size_t replicates,
                                      std::uint64_t seed, const SweepOptions& options = {}) {
  base_spec.validate();
  if (c_grid.empty()) throw InvalidDataError("sweep_cp: empty grid");
  if (replicates < 2) throw InvalidDataError("sweep_cp: need at least 2 replicates");
  if (n_train < 2 || n_test < 1) throw InsufficientDataError("sweep_cp: sample sizes too small");

  struct Cell {
    std::string method;
    std::string mode;
    std::vector<double> mses;
  };
  std::vector<SweepRow> rows;
  for (double c : c_grid) {
    EivSpec spec = base_spec;
    spec.c = c;
    std::vector<Cell> cells = {{"oracle", "", {}},
                               {"pca", "", {}},
                               {"treelet", "single_level", {}},
                               {"treelet", "union", {}}};
    for (std::size_t r = 0; r < replicates; ++r) {
      const EivSample all = sample_eiv(spec, n_train + n_test, seed + r);
      const EivSample train = all.rows(0, n_train);
      const EivSample test = all.rows(n_train, n_test);
      const auto record = [&](Cell& cell, auto&& run) {
        try {
          cell.mses.push_back(run().mean);
        } catch (const Error&) {
        }
      };
      record(cells[0], [&] { return oracle_regress(spec, test); });
      record(cells[1], [&] { return pca_regress(train, test, options.q); });
      record(cells[2], [&] {
        return treelet_regress(train, test, {LevelMode::single_level, std::nullopt, options.k_features});
      });
      record(cells[3], [&] {
        return treelet_regress(train, test, {LevelMode::union_levels, std::nullopt, options.k_features});
      });
    }
    for (auto& cell : cells) {
      SweepRow row;
      row.c = c;
      row.method = cell.method;
      row.mode = cell.mode;
      row.replicates = cell.mses.size();
      if (cell.mses.size() >= 2) {
        const auto s = summarize(cell.method, cell.mode, cell.mses);
        row.mse_mean = s.mean;
        row.mse_se = s.se;
      }
      row.mses = std::move(cell.mses);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kSweepCsvHeader = "c,method,mode,mse_mean,mse_se,replicates";

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    out << format_double(r.c) << ',' << r.method << ',' << r.mode << ','
        << (r.mse_mean ? format_double(*r.mse_mean) : "") << ','
        << (r.mse_se ? format_double(*r.mse_se) : "") << ',' << r.replicates << '\n';
  }
  return out.str();
}

}  // namespace treelets::eiv

#endif  // TREELETS_EIV_BENCH_HPP
