#ifndef TREELETS_FACTOR_MODEL_HPP
#define TREELETS_FACTOR_MODEL_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"
#include "treelets/sym_matrix.hpp"

namespace treelets::factor {

/// Zero-mean one-dimensional factor law.
struct FactorDist {
  enum class Kind { gaussian, uniform, rademacher, laplace };

  Kind kind = Kind::gaussian;
  /// gaussian: variance; uniform: half width; laplace: scale; unused for rademacher.
  double param = 1.0;

  static FactorDist gaussian(double variance) { return {Kind::gaussian, variance}; }
  static FactorDist uniform(double half_width) { return {Kind::uniform, half_width}; }
  static FactorDist rademacher() { return {Kind::rademacher, 1.0}; }
  static FactorDist laplace(double scale) { return {Kind::laplace, scale}; }

  double variance() const {
    switch (kind) {
      case Kind::gaussian: return param;
      case Kind::uniform: return param * param / 3.0;
      case Kind::rademacher: return 1.0;
      case Kind::laplace: return 2.0 * param * param;
    }
    return 0.0;
  }

  template <class Rng>
  double draw(Rng& rng) const {
    switch (kind) {
      case Kind::gaussian: return std::normal_distribution<double>(0.0, std::sqrt(param))(rng);
      case Kind::uniform: return std::uniform_real_distribution<double>(-param, param)(rng);
      case Kind::rademacher: return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
      case Kind::laplace: {
        // Difference of two iid exponentials with mean `param`.
        std::exponential_distribution<double> e(1.0 / param);
        return e(rng) - e(rng);
      }
    }
    return 0.0;
  }

  bool operator==(const FactorDist&) const = default;
};

inline std::string to_string(FactorDist::Kind k) {
  switch (k) {
    case FactorDist::Kind::gaussian: return "gaussian";
    case FactorDist::Kind::uniform: return "uniform";
    case FactorDist::Kind::rademacher: return "rademacher";
    case FactorDist::Kind::laplace: return "laplace";
  }
  return "unknown";
}

/// Latent factor model X = C e + sigma Z, with C the p x K loading matrix
/// (C = V B for loading vectors V and mixing B), e independent zero-mean
/// factors and Z standard Gaussian noise.
struct FactorSpec {
  std::size_t p = 0;
  std::size_t K = 0;
  Eigen::MatrixXd loadings;
  std::vector<FactorDist> factor_dists;
  double noise_sigma = 0.0;

  void validate() const {
    if (p < 1) throw InvalidDataError("FactorSpec: p must be positive");
    if (K < 1) throw InvalidDataError("FactorSpec: K must be positive");
    if (static_cast<std::size_t>(loadings.rows()) != p ||
        static_cast<std::size_t>(loadings.cols()) != K)
      throw DimensionError("FactorSpec: loadings must be p x K");
    if (!loadings.allFinite()) throw InvalidDataError("FactorSpec: non-finite loading");
    if (factor_dists.size() != K) throw DimensionError("FactorSpec: need K factor distributions");
    for (const auto& d : factor_dists) {
      const double v = d.variance();
      if (!std::isfinite(v) || !(v > 0.0))
        throw InvalidDataError("FactorSpec: factor variance must be finite and positive");
    }
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0)
      throw InvalidDataError("FactorSpec: noise_sigma must be finite and >= 0");
  }
};

/// n draws of the model, one per row; deterministic given the seed.
inline Eigen::MatrixXd sample_factor_data(const FactorSpec& spec, std::size_t n,
                                          std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InsufficientDataError("sample_factor_data: n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(spec.p);
  const auto K = static_cast<Eigen::Index>(spec.K);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd e(K);
  Eigen::VectorXd z(p);
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(n); ++r) {
    for (Eigen::Index k = 0; k < K; ++k) e(k) = spec.factor_dists[static_cast<std::size_t>(k)].draw(rng);
    for (Eigen::Index j = 0; j < p; ++j) z(j) = std_normal(rng);
    out.row(r) = (spec.loadings * e + spec.noise_sigma * z).transpose();
  }
  return out;
}

/// C diag(factor variances) C^T + sigma^2 I.
inline SymMatrix population_covariance(const FactorSpec& spec) {
  spec.validate();
  Eigen::VectorXd vars(static_cast<Eigen::Index>(spec.K));
  for (std::size_t k = 0; k < spec.K; ++k)
    vars(static_cast<Eigen::Index>(k)) = spec.factor_dists[k].variance();
  Eigen::MatrixXd cov = spec.loadings * vars.asDiagonal() * spec.loadings.transpose();
  cov.diagonal().array() += spec.noise_sigma * spec.noise_sigma;
  return SymMatrix::from_dense(0.5 * (cov + cov.transpose()));
}

/// Two Gaussian specs with equal population covariance.
///
/// Spec A has three factors with loadings v1, v2 and v3 = c1 v1 + c2 v2 and
/// variances tau. Spec B folds the third factor into two unit-variance factors
/// with loadings [v1 v2] L, where L is the lower Cholesky factor of
/// diag(tau1, tau2) + tau3 (c1, c2)(c1, c2)^T. Setting c1 = c2 = 0 reproduces
/// a vanishing third factor.
inline std::pair<FactorSpec, FactorSpec> example2_pair(const Eigen::VectorXd& v1,
                                                       const Eigen::VectorXd& v2, double c1,
                                                       double c2,
                                                       const std::array<double, 3>& tau,
                                                       double sigma) {
  if (v1.size() != v2.size() || v1.size() == 0)
    throw DimensionError("example2_pair: v1 and v2 must have the same positive length");
  for (double t : tau) {
    if (!(t > 0.0) || !std::isfinite(t))
      throw InvalidDataError("example2_pair: factor variances must be positive");
  }
  const double n1 = v1.squaredNorm();
  const double n2 = v2.squaredNorm();
  const double cross = v1.dot(v2);
  const double gram = n1 * n2 - cross * cross;
  if (!(gram > 1e-12 * n1 * n2))
    throw DegenerateConstructionError("example2_pair: v1 and v2 are collinear");

  const auto p = static_cast<std::size_t>(v1.size());
  const auto P = static_cast<Eigen::Index>(p);

  FactorSpec a;
  a.p = p;
  a.K = 3;
  a.loadings.resize(P, 3);
  a.loadings.col(0) = v1;
  a.loadings.col(1) = v2;
  a.loadings.col(2) = c1 * v1 + c2 * v2;
  a.factor_dists = {FactorDist::gaussian(tau[0]), FactorDist::gaussian(tau[1]),
                    FactorDist::gaussian(tau[2])};
  a.noise_sigma = sigma;

  Eigen::Matrix2d m;
  m << tau[0] + tau[2] * c1 * c1, tau[2] * c1 * c2, tau[2] * c1 * c2, tau[1] + tau[2] * c2 * c2;
  const Eigen::LLT<Eigen::Matrix2d> llt(m);
  if (llt.info() != Eigen::Success)
    throw DegenerateConstructionError("example2_pair: folded factor covariance is not positive definite");
  Eigen::MatrixXd v(P, 2);
  v.col(0) = v1;
  v.col(1) = v2;

  FactorSpec b;
  b.p = p;
  b.K = 2;
  b.loadings = v * Eigen::Matrix2d(llt.matrixL());
  b.factor_dists = {FactorDist::gaussian(1.0), FactorDist::gaussian(1.0)};
  b.noise_sigma = sigma;

  a.validate();
  b.validate();
  return {std::move(a), std::move(b)};
}

}  // namespace treelets::factor

#endif  // TREELETS_FACTOR_MODEL_HPP
