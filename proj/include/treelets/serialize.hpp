#ifndef TREELETS_SERIALIZE_HPP
#define TREELETS_SERIALIZE_HPP

// JSON documents for models, specs and traces (nlohmann/json).

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "treelets/eiv_bench.hpp"
#include "treelets/errors.hpp"
#include "treelets/factor_model.hpp"
#include "treelets/hier_select.hpp"
#include "treelets/treelet.hpp"

namespace treelets {

using Json = nlohmann::json;

/// {dim, rotations: [{level, i, j, c, s, sum, diff}], tie_log}; indices are 0-based.
inline Json to_json(const TreeletModel& model) {
  Json rotations = Json::array();
  for (const auto& s : model.steps) {
    rotations.push_back({{"level", s.level},
                         {"i", s.rotation.i},
                         {"j", s.rotation.j},
                         {"c", s.rotation.c},
                         {"s", s.rotation.s},
                         {"sum", s.sum_index},
                         {"diff", s.diff_index}});
  }
  return {{"dim", model.dim}, {"rotations", rotations}, {"tie_log", model.tie_log}};
}

/// Inverse of to_json. Scores and residuals are not part of the document and
/// come back as zero.
inline TreeletModel treelet_from_json(const Json& doc) {
  try {
    TreeletModel m;
    m.dim = doc.at("dim").get<std::size_t>();
    for (const auto& r : doc.at("rotations")) {
      TreeletStep s;
      s.level = r.at("level").get<std::size_t>();
      s.rotation = {r.at("i").get<std::size_t>(), r.at("j").get<std::size_t>(), r.at("c").get<double>(),
                    r.at("s").get<double>()};
      s.sum_index = r.at("sum").get<std::size_t>();
      s.diff_index = r.at("diff").get<std::size_t>();
      if (s.rotation.i >= s.rotation.j || s.rotation.j >= m.dim || s.level != m.steps.size() + 1)
        throw InvalidDataError("treelet JSON: malformed rotation at position " + std::to_string(m.steps.size()));
      m.steps.push_back(s);
    }
    m.max_level = m.steps.size();
    m.tie_log = doc.at("tie_log").get<std::vector<std::size_t>>();
    m.active_sets = detail::active_sets_from_steps(m.dim, m.steps);
    return m;
  } catch (const Json::exception& e) {
    throw InvalidDataError(std::string("treelet JSON: ") + e.what());
  }
}

namespace factor {

inline Json to_json(const FactorSpec& spec) {
  std::vector<double> flat;
  for (Eigen::Index r = 0; r < spec.loadings.rows(); ++r) {
    for (Eigen::Index k = 0; k < spec.loadings.cols(); ++k) flat.push_back(spec.loadings(r, k));
  }
  Json dists = Json::array();
  for (const auto& d : spec.factor_dists) dists.push_back({{"kind", to_string(d.kind)}, {"param", d.param}});
  return {{"p", spec.p}, {"K", spec.K}, {"loadings", flat}, {"factor_dists", dists}, {"noise_sigma", spec.noise_sigma}};
}

inline FactorSpec factor_spec_from_json(const Json& doc) {
  try {
    FactorSpec spec;
    spec.p = doc.at("p").get<std::size_t>();
    spec.K = doc.at("K").get<std::size_t>();
    const auto flat = doc.at("loadings").get<std::vector<double>>();
    if (flat.size() != spec.p * spec.K) throw InvalidDataError("FactorSpec JSON: loadings must have p*K entries");
    spec.loadings.resize(static_cast<Eigen::Index>(spec.p), static_cast<Eigen::Index>(spec.K));
    for (std::size_t r = 0; r < spec.p; ++r) {
      for (std::size_t k = 0; k < spec.K; ++k)
        spec.loadings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = flat[r * spec.K + k];
    }
    for (const auto& d : doc.at("factor_dists")) {
      const auto kind = d.at("kind").get<std::string>();
      const double param = d.value("param", 1.0);
      if (kind == "gaussian") {
        spec.factor_dists.push_back(FactorDist::gaussian(param));
      } else if (kind == "uniform") {
        spec.factor_dists.push_back(FactorDist::uniform(param));
      } else if (kind == "rademacher") {
        spec.factor_dists.push_back(FactorDist::rademacher());
      } else if (kind == "laplace") {
        spec.factor_dists.push_back(FactorDist::laplace(param));
      } else {
        throw InvalidDataError("FactorSpec JSON: unknown factor distribution '" + kind + "'");
      }
    }
    spec.noise_sigma = doc.at("noise_sigma").get<double>();
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw InvalidDataError(std::string("FactorSpec JSON: ") + e.what());
  }
}

}  // namespace factor

namespace eiv {

inline Json to_json(const EivSpec& spec) {
  return {{"p", spec.p}, {"gamma", spec.gamma}, {"c", spec.c}, {"noise_vars", spec.noise_vars}};
}

inline Json to_json(const std::vector<SweepRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"c", r.c},
                   {"method", r.method},
                   {"mode", r.mode},
                   {"mse_mean", r.mse_mean ? Json(*r.mse_mean) : Json(nullptr)},
                   {"mse_se", r.mse_se ? Json(*r.mse_se) : Json(nullptr)},
                   {"replicates", r.replicates},
                   {"mses", r.mses}});
  }
  return out;
}

}  // namespace eiv

namespace hier {

/// Per generation {m, dict_size, selected, train_mse, holdout_mse}.
inline Json trace_to_json(const std::vector<GenerationRecord>& trace) {
  Json out = Json::array();
  for (const auto& g : trace) {
    out.push_back({{"m", g.m},
                   {"dict_size", g.dict_size},
                   {"selected", g.selected_expressions},
                   {"train_mse", g.train_mse},
                   {"holdout_mse", g.holdout_mse}});
  }
  return out;
}

}  // namespace hier

}  // namespace treelets

#endif  // TREELETS_SERIALIZE_HPP
