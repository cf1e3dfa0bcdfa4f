#ifndef TREELETS_HIER_SELECT_HPP
#define TREELETS_HIER_SELECT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "treelets/errors.hpp"
#include "treelets/linalg.hpp"

namespace treelets::hier {

enum class OperatorKind { product, pair_pca };
enum class Branch { primary, secondary };

inline std::string to_string(OperatorKind op) { return op == OperatorKind::product ? "product" : "pair_pca"; }

/// Children contributed per unordered parent pair.
inline std::size_t branches_per_pair(OperatorKind op) { return op == OperatorKind::product ? 1 : 2; }

struct BaseNode {
  std::size_t index = 0;  // 0-based column
  bool operator==(const BaseNode&) const = default;
};

struct CombinedNode {
  OperatorKind op = OperatorKind::product;
  std::size_t left = 0;  // feature ids, left <= right
  std::size_t right = 0;
  Branch branch = Branch::primary;
  bool operator==(const CombinedNode&) const = default;
};

struct Feature {
  std::size_t id = 0;
  std::variant<BaseNode, CombinedNode> node;
  /// Generation at which the feature entered the dictionary; 0 for base.
  std::size_t depth = 0;

  bool is_base() const { return std::holds_alternative<BaseNode>(node); }
};

/// Append-only feature DAG. Ids are positions, so they never change, and each
/// structural combination is stored once.
class Dictionary {
 public:
  static Dictionary base(std::size_t p) {
    Dictionary d;
    for (std::size_t i = 0; i < p; ++i) d.features_.push_back({i, BaseNode{i}, 0});
    return d;
  }

  std::size_t size() const { return features_.size(); }
  const Feature& operator[](std::size_t id) const { return features_.at(id); }
  const std::vector<Feature>& features() const { return features_; }
  std::size_t generation() const { return generation_; }

  std::vector<std::size_t> ids() const {
    std::vector<std::size_t> out(features_.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }

  std::vector<std::size_t> ids_at_depth(std::size_t depth) const {
    std::vector<std::size_t> out;
    for (const auto& f : features_) {
      if (f.depth == depth) out.push_back(f.id);
    }
    return out;
  }

  /// x<i> (1-based), (<l>*<r>), pc1(<l>,<r>) or pc2(<l>,<r>).
  std::string expression(std::size_t id) const {
    const Feature& f = (*this)[id];
    if (const auto* b = std::get_if<BaseNode>(&f.node)) return "x" + std::to_string(b->index + 1);
    const auto& c = std::get<CombinedNode>(f.node);
    if (c.op == OperatorKind::product) return "(" + expression(c.left) + "*" + expression(c.right) + ")";
    return std::string(c.branch == Branch::primary ? "pc1(" : "pc2(") + expression(c.left) + "," +
           expression(c.right) + ")";
  }

  std::optional<std::size_t> find(const CombinedNode& node) const {
    const auto it = index_.find(key(node));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Adds every op-combination of unordered pairs from `selected` that is not
  /// already present. Product pairs include f with itself; pair_pca skips
  /// self-pairs, whose rotation is degenerate. Returns the new ids.
  std::vector<std::size_t> add_combinations(const std::vector<std::size_t>& selected, OperatorKind op) {
    std::vector<std::size_t> sorted = selected;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t id : sorted) {
      if (id >= features_.size()) throw IndexError("expand: selected id not in dictionary");
    }
    ++generation_;
    std::vector<std::size_t> added;
    for (std::size_t a = 0; a < sorted.size(); ++a) {
      for (std::size_t b = a; b < sorted.size(); ++b) {
        if (a == b && op == OperatorKind::pair_pca) continue;
        for (Branch br : {Branch::primary, Branch::secondary}) {
          if (br == Branch::secondary && op == OperatorKind::product) continue;
          const CombinedNode node{op, sorted[a], sorted[b], br};
          if (find(node)) continue;
          const std::size_t id = features_.size();
          features_.push_back({id, node, generation_});
          index_.emplace(key(node), id);
          added.push_back(id);
        }
      }
    }
    return added;
  }

 private:
  using Key = std::tuple<int, std::size_t, std::size_t, int>;
  static Key key(const CombinedNode& n) {
    return {static_cast<int>(n.op), std::min(n.left, n.right), std::max(n.left, n.right),
            static_cast<int>(n.branch)};
  }

  std::vector<Feature> features_;
  std::map<Key, std::size_t> index_;
  std::size_t generation_ = 0;
};

/// F_m = F_{m-1} united with {f (+) g : f, g in selected}.
inline Dictionary expand(const std::vector<std::size_t>& selected, OperatorKind op, Dictionary existing) {
  existing.add_combinations(selected, op);
  return existing;
}

/// Standardized feature values over all rows of a data set.
struct Evaluation {
  Eigen::VectorXd values;
  bool degenerate = false;
};

namespace detail {

inline Evaluation standardize(Eigen::VectorXd raw) {
  const auto n = static_cast<double>(raw.size());
  const double mean = raw.mean();
  raw.array() -= mean;
  const double sd = std::sqrt(raw.squaredNorm() / (n - 1.0));
  const double scale = std::max(1.0, std::abs(mean) + raw.cwiseAbs().maxCoeff());
  if (!(sd > 1e-10 * scale)) return {Eigen::VectorXd::Zero(raw.size()), true};
  return {raw / sd, false};
}

}  // namespace detail

/// Memoized feature evaluation on a fixed data matrix. Lookups take a shared
/// lock; insertion takes the exclusive lock.
class FeatureCache {
 public:
  explicit FeatureCache(Eigen::MatrixXd data) : data_(std::move(data)) {
    if (data_.rows() < 2) throw InsufficientDataError("FeatureCache: need at least 2 rows");
    linalg::check_finite(data_);
  }

  const Eigen::MatrixXd& data() const { return data_; }
  std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }

  std::shared_ptr<const Evaluation> lookup(std::size_t id) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : it->second;
  }

  std::shared_ptr<const Evaluation> insert(std::size_t id, Evaluation e) {
    std::unique_lock lock(mutex_);
    const auto [it, inserted] = entries_.emplace(id, std::make_shared<const Evaluation>(std::move(e)));
    return it->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  Eigen::MatrixXd data_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::size_t, std::shared_ptr<const Evaluation>> entries_;
};

/// Values of feature `id`, standardized to mean 0 and variance 1. Zero-variance
/// results come back flagged degenerate with all-zero values.
inline std::shared_ptr<const Evaluation> evaluate_feature(const Dictionary& dict, std::size_t id,
                                                          FeatureCache& cache) {
  if (auto hit = cache.lookup(id)) return hit;
  const Feature& f = dict[id];
  if (const auto* b = std::get_if<BaseNode>(&f.node)) {
    if (b->index >= static_cast<std::size_t>(cache.data().cols()))
      throw IndexError("evaluate_feature: base index out of range");
    return cache.insert(id, detail::standardize(cache.data().col(static_cast<Eigen::Index>(b->index))));
  }
  const auto& c = std::get<CombinedNode>(f.node);
  const auto left = evaluate_feature(dict, c.left, cache);
  const auto right = evaluate_feature(dict, c.right, cache);
  const auto n = static_cast<Eigen::Index>(cache.rows());
  if (left->degenerate || right->degenerate) return cache.insert(id, {Eigen::VectorXd::Zero(n), true});
  if (c.op == OperatorKind::product)
    return cache.insert(id, detail::standardize(left->values.cwiseProduct(right->values)));

  Eigen::MatrixXd pair(n, 2);
  pair.col(0) = left->values;
  pair.col(1) = right->values;
  const auto [rot, rotated_cov] = linalg::jacobi_rotate(linalg::sample_covariance(pair), 0, 1);
  linalg::rotate_columns(pair, rot);
  const Eigen::Index larger = rotated_cov(1, 1) > rotated_cov(0, 0) ? 1 : 0;
  const Eigen::Index pick = c.branch == Branch::primary ? larger : 1 - larger;
  return cache.insert(id, detail::standardize(pair.col(pick)));
}

enum class Selector { marginal_correlation, forward_stepwise };

inline std::string to_string(Selector s) {
  return s == Selector::marginal_correlation ? "marginal_correlation" : "forward_stepwise";
}

struct SelectorConfig {
  /// Explicit capacity; unset means ceil(n^k_exponent).
  std::optional<std::size_t> K;
  double k_exponent = 0.5;
  Selector selector = Selector::marginal_correlation;
  std::size_t max_generations = 5;
  std::size_t patience = 2;
  double min_delta = 1e-4;
  /// A new generation must also beat the best by this many standard errors of
  /// the paired held-out squared-error differences.
  double se_margin = 2.0;
  double holdout_fraction = 0.2;
  /// Select only among the features created by the latest expansion.
  bool latest_generation_only = false;

  std::size_t capacity(std::size_t n) const {
    const std::size_t k = K ? *K : static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), k_exponent)));
    return std::max<std::size_t>(k, 1);
  }

  void validate() const {
    if (K && *K < 1) throw InvalidDataError("SelectorConfig: K must be at least 1");
    if (!(k_exponent >= 0.0) || !std::isfinite(k_exponent))
      throw InvalidDataError("SelectorConfig: k_exponent must be finite and >= 0");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw InvalidDataError("SelectorConfig: holdout_fraction must lie in (0, 1)");
    if (patience < 1) throw InvalidDataError("SelectorConfig: patience must be at least 1");
    if (!(se_margin >= 0.0) || !std::isfinite(se_margin))
      throw InvalidDataError("SelectorConfig: se_margin must be finite and >= 0");
  }
};

/// Feature values restricted to `rows`, one column per id.
inline Eigen::MatrixXd gather(const Dictionary& dict, const std::vector<std::size_t>& ids,
                              FeatureCache& cache, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto e = evaluate_feature(dict, ids[k], cache);
    for (std::size_t r = 0; r < rows.size(); ++r)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = e->values(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

/// Selects up to K of `candidates` using the rows in `rows` (`y` is indexed by
/// the full row range). Degenerate features and features linearly dependent on
/// the ones already chosen are skipped, so fewer than K may come back.
inline std::vector<std::size_t> ms_k(const Dictionary& dict, const std::vector<std::size_t>& candidates,
                                     FeatureCache& cache, const Eigen::VectorXd& y,
                                     const SelectorConfig& config, const std::vector<std::size_t>& rows) {
  if (candidates.empty()) throw EmptySelectionError("ms_k: empty feature set");
  if (static_cast<std::size_t>(y.size()) != cache.rows()) throw DimensionError("ms_k: y length mismatch");
  const std::size_t K = config.capacity(cache.rows());

  std::vector<std::size_t> usable;
  for (std::size_t id : candidates) {
    if (!evaluate_feature(dict, id, cache)->degenerate) usable.push_back(id);
  }
  std::sort(usable.begin(), usable.end());
  if (usable.empty()) throw EmptySelectionError("ms_k: every candidate feature is degenerate");

  const Eigen::MatrixXd X = gather(dict, usable, cache, rows);
  Eigen::VectorXd yr(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) yr(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(rows[r]));

  std::vector<std::size_t> picked;  // positions in `usable`
  if (config.selector == Selector::marginal_correlation) {
    std::vector<double> score(usable.size());
    for (std::size_t k = 0; k < usable.size(); ++k)
      score[k] = std::abs(linalg::correlation(X.col(static_cast<Eigen::Index>(k)), yr));
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    picked = linalg::select_independent(X, order, K);
  } else {
    // Residualized copies of every candidate; each step projects out the newest direction only.
    Eigen::MatrixXd resid = X.rowwise() - X.colwise().mean();
    const Eigen::VectorXd norm0 = resid.colwise().norm();
    Eigen::VectorXd r = yr.array() - yr.mean();
    std::vector<bool> taken(usable.size(), false);
    const double n = static_cast<double>(rows.size());
    while (picked.size() < K) {
      double best = 0.0;
      std::optional<std::size_t> best_k;
      for (std::size_t k = 0; k < usable.size(); ++k) {
        if (taken[k]) continue;
        const auto col = resid.col(static_cast<Eigen::Index>(k));
        const double nn = col.norm();
        if (!(nn > 1e-8 * norm0(static_cast<Eigen::Index>(k)))) continue;
        const double dot = col.dot(r);
        const double reduction = dot * dot / (nn * nn);
        if (!best_k || reduction > best) {
          best = reduction;
          best_k = k;
        }
      }
      if (!best_k) break;
      if (!picked.empty() && best / n <= config.min_delta) break;
      const auto k = *best_k;
      taken[k] = true;
      picked.push_back(k);
      const Eigen::VectorXd q = resid.col(static_cast<Eigen::Index>(k)).normalized();
      r -= q.dot(r) * q;
      for (std::size_t j = 0; j < usable.size(); ++j) {
        if (!taken[j]) resid.col(static_cast<Eigen::Index>(j)) -= q.dot(resid.col(static_cast<Eigen::Index>(j))) * q;
      }
    }
  }
  if (picked.empty()) throw EmptySelectionError("ms_k: no feature could be selected");
  std::vector<std::size_t> out;
  for (std::size_t k : picked) out.push_back(usable[k]);
  return out;
}

struct GenerationRecord {
  std::size_t m = 0;
  std::size_t dict_size = 0;
  std::vector<std::size_t> selected;
  std::vector<std::string> selected_expressions;
  double train_mse = 0.0;
  double holdout_mse = 0.0;
};

struct HierResult {
  Dictionary dictionary;
  std::vector<std::size_t> selected;
  std::vector<std::string> selected_expressions;
  linalg::LinearFit fit;
  std::vector<GenerationRecord> trace;
  std::size_t best_generation = 0;
  std::vector<std::string> warnings;
};

/// Grow-and-select loop: F_0 = base columns; S_m = MS_K(F_m) on the training
/// split; F_{m+1} = F_m united with all S_m (+) S_m combinations. Stops after
/// `patience` generations without a held-out improvement above `min_delta` plus
/// `se_margin` paired standard errors, or
/// at `max_generations`, and reports the best generation's selection and fit.
/// `seed` drives the train/holdout split.
inline HierResult run_hierarchical(const Eigen::MatrixXd& data, const Eigen::VectorXd& y, OperatorKind op,
                                   const SelectorConfig& config, std::uint64_t seed) {
  config.validate();
  const auto n = static_cast<std::size_t>(data.rows());
  const auto p = static_cast<std::size_t>(data.cols());
  if (n < 10) throw InsufficientDataError("run_hierarchical: need at least 10 rows");
  if (p < 1) throw DimensionError("run_hierarchical: need at least one column");
  if (static_cast<std::size_t>(y.size()) != n) throw DimensionError("run_hierarchical: y length mismatch");
  if (!y.allFinite()) throw InvalidDataError("run_hierarchical: y contains non-finite values");

  std::vector<std::size_t> perm = all_rows(n);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.holdout_fraction)));
  std::vector<std::size_t> hold(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());

  const auto take = [&](const std::vector<std::size_t>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(rows[r]));
    return out;
  };
  const Eigen::VectorXd y_train = take(train);
  const Eigen::VectorXd y_hold = take(hold);

  FeatureCache cache(data);
  HierResult result;
  Dictionary dict = Dictionary::base(p);
  double best_risk = 0.0;
  Eigen::ArrayXd best_sq;
  std::size_t stall = 0;
  for (std::size_t m = 0;; ++m) {
    const std::vector<std::size_t> candidates =
        (config.latest_generation_only && m > 0) ? dict.ids_at_depth(dict.generation()) : dict.ids();
    if (candidates.empty()) break;  // the last expansion produced nothing new
    const auto selected = ms_k(dict, candidates, cache, y, config, train);
    const auto fit = linalg::fit_ols(gather(dict, selected, cache, train), y_train);

    GenerationRecord rec;
    rec.m = m;
    rec.dict_size = dict.size();
    rec.selected = selected;
    for (std::size_t id : selected) rec.selected_expressions.push_back(dict.expression(id));
    rec.train_mse = linalg::mean_squared_error(y_train, fit.predict(gather(dict, selected, cache, train)));
    const Eigen::ArrayXd sq = (y_hold - fit.predict(gather(dict, selected, cache, hold))).array().square();
    rec.holdout_mse = sq.mean();

    bool improved = m == 0;
    if (!improved) {
      const Eigen::ArrayXd d = best_sq - sq;
      const double se = d.size() > 1 ? std::sqrt((d - d.mean()).square().sum() / static_cast<double>(d.size() - 1) /
                                                 static_cast<double>(d.size()))
                                     : 0.0;
      improved = rec.holdout_mse < best_risk - config.min_delta - config.se_margin * se;
    }
    if (improved) {
      best_risk = rec.holdout_mse;
      best_sq = sq;
      result.best_generation = m;
      result.selected = selected;
      result.selected_expressions = rec.selected_expressions;
      result.fit = fit;
      stall = 0;
    } else {
      ++stall;
    }
    result.trace.push_back(std::move(rec));
    if (m >= config.max_generations || stall >= config.patience) break;
    dict = expand(selected, op, std::move(dict));
  }
  result.dictionary = std::move(dict);

  const double budget = static_cast<double>(n) / std::log(static_cast<double>(n));
  if (static_cast<double>(result.selected.size()) > budget)
    result.warnings.push_back("selected " + std::to_string(result.selected.size()) +
                              " features, more than n/log(n) = " + std::to_string(budget));
  return result;
}

}  // namespace treelets::hier

#endif  // TREELETS_HIER_SELECT_HPP
