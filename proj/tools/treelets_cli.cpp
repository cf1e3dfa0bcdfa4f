// treelets: command-line driver for the treelet, errors-in-variables and
// hierarchical selection tools. Exit codes: 0 ok, 1 check failed, 2 usage,
// parse or data error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "treelets/treelets.hpp"

namespace fs = std::filesystem;
using treelets::Json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One flag that is also a manifest key.
struct Param {
  std::string key;
  CLI::Option* option = nullptr;
  std::function<Json()> get;
  std::function<void(const Json&)> set;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help) : sub_(app.add_subcommand(name, help)) {
    add("--seed", "seed", seed, "Random seed");
    sub_->add_option("--out", out, "Output directory")->capture_default_str();
    sub_->add_option("--config", config, "JSON manifest; explicit flags take precedence");
  }

  template <typename T>
  CLI::Option* add(const std::string& flag, const std::string& key, T& var, const std::string& help) {
    CLI::Option* opt = sub_->add_option(flag, var, help);
    if constexpr (!is_optional<T>::value) opt->capture_default_str();
    params_.push_back({key, opt, [&var] { return to_json(var); }, [&var, key](const Json& j) { from_json(j, var, key); }});
    return opt;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& var, const std::string& help) {
    CLI::Option* opt = sub_->add_flag(flag, var, help);
    params_.push_back({key, opt, [&var] { return Json(var); }, [&var, key](const Json& j) { from_json(j, var, key); }});
    return opt;
  }

  CLI::App* app() const { return sub_; }
  std::string name() const { return sub_->get_name(); }

  /// Fills every flag not given on the command line from the --config file.
  void merge_config() {
    if (config.empty()) return;
    std::ifstream in(config);
    if (!in) throw UsageError("cannot open config " + config);
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw UsageError("config " + config + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "subcommand") {
        if (value != name()) throw UsageError("config is for subcommand " + value.dump());
        continue;
      }
      const Param* p = find(key);
      if (!p) throw UsageError("config: unknown key '" + key + "'");
      if (p->option->count() == 0) p->set(value);
    }
  }

  Json manifest() const {
    Json m = {{"subcommand", name()}};
    for (const auto& p : params_) m[p.key] = p.get();
    return m;
  }

  std::uint64_t seed = 0;
  std::string out = "out";
  std::string config;

 private:
  template <typename T>
  struct is_optional : std::false_type {};
  template <typename T>
  struct is_optional<std::optional<T>> : std::true_type {};

  template <typename T>
  static Json to_json(const T& v) {
    if constexpr (is_optional<T>::value) {
      return v ? Json(*v) : Json(nullptr);
    } else {
      return Json(v);
    }
  }

  template <typename T>
  static void from_json(const Json& j, T& v, const std::string& key) {
    try {
      if constexpr (is_optional<T>::value) {
        if (j.is_null()) {
          v.reset();
        } else {
          v = j.get<typename T::value_type>();
        }
      } else {
        v = j.get<T>();
      }
    } catch (const Json::exception&) {
      throw UsageError("config: bad value for '" + key + "': " + j.dump());
    }
  }

  const Param* find(const std::string& key) const {
    for (const auto& p : params_) {
      if (p.key == key) return &p;
    }
    return nullptr;
  }

  CLI::App* sub_;
  std::vector<Param> params_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

fs::path prepare_out(const Command& cmd) {
  const fs::path dir(cmd.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

// ---- treelet ---------------------------------------------------------------

struct TreeletArgs {
  std::string input;
  std::optional<std::size_t> basis_level;
  std::optional<std::size_t> max_level;
  std::string score = "correlation";
  double tie_tolerance = 1e-12;
};

int run_treelet(const Command& cmd, const TreeletArgs& a) {
  if (a.input.empty()) throw UsageError("treelet: --input is required");
  if (a.score != "correlation" && a.score != "covariance") throw UsageError("treelet: --score must be correlation or covariance");
  const auto table = treelets::csv::read_file(a.input);
  if (table.values.rows() < 2) throw treelets::InsufficientDataError("treelet: need at least 2 data rows");
  if (table.values.cols() < 2) throw treelets::DimensionError("treelet: need at least 2 columns");

  treelets::TreeletOptions opts;
  opts.max_level = a.max_level;
  opts.score = a.score == "covariance" ? treelets::PairScore::covariance : treelets::PairScore::correlation;
  opts.tie_tolerance = a.tie_tolerance;
  treelets::TreeletModel model;
  try {
    model = treelets::build_treelet(treelets::linalg::sample_covariance(table.values), opts);
  } catch (const treelets::DegenerateVarianceError& e) {
    throw treelets::InvalidDataError("column '" + table.header.at(e.index()) + "' has (near) zero variance");
  }

  const auto dir = prepare_out(cmd);
  Json doc = treelets::to_json(model);
  write_text(dir / "model.json", dump(doc));
  if (a.basis_level) {
    const auto basis = treelets::basis_at_level(model, *a.basis_level);
    write_text(dir / ("basis_" + std::to_string(*a.basis_level) + ".csv"), treelets::csv::write(table.header, basis));
  }
  write_text(dir / "manifest.json", dump(cmd.manifest()));
  std::cout << "treelet: p=" << model.dim << " levels=" << model.max_level << " ties=" << model.tie_log.size() << "\n";
  return 0;
}

// ---- eiv-sweep -------------------------------------------------------------

struct SweepArgs {
  std::size_t p = 50;
  double gamma = 1.0;
  std::vector<double> c_grid = treelets::eiv::default_grid_multipliers();
  bool c_absolute = false;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::size_t reps = 20;
  double noise_var = 1.0;
  std::size_t q = 1;
  std::size_t k_features = 1;
};

int run_sweep(const Command& cmd, const SweepArgs& a) {
  if (a.reps < 2) throw UsageError("eiv-sweep: --reps must be at least 2 for a Monte-Carlo standard error");
  if (a.c_grid.empty()) throw UsageError("eiv-sweep: --c-grid is empty");
  if (a.p < 1) throw UsageError("eiv-sweep: --p must be positive");
  const auto base = treelets::eiv::EivSpec::isotropic(a.p, a.gamma, 0.0, a.noise_var);
  std::vector<double> grid;
  for (double m : a.c_grid) grid.push_back(a.c_absolute ? m : m / std::sqrt(static_cast<double>(a.p)));

  treelets::eiv::SweepOptions opts;
  opts.q = a.q;
  opts.k_features = a.k_features;
  const auto rows = treelets::eiv::sweep_cp(base, grid, a.n_train, a.n_test, a.reps, cmd.seed, opts);

  const auto dir = prepare_out(cmd);
  write_text(dir / "sweep.csv", treelets::eiv::sweep_to_csv(rows));
  Json report = {{"spec", treelets::eiv::to_json(base)},
                 {"seed", cmd.seed},
                 {"c_grid", grid},
                 {"n_train", a.n_train},
                 {"n_test", a.n_test},
                 {"replicates", a.reps},
                 {"rows", treelets::eiv::to_json(rows)}};
  write_text(dir / "report.json", dump(report));
  write_text(dir / "manifest.json", dump(cmd.manifest()));

  for (std::size_t k = 0; k < rows.size();) {
    const double c = rows[k].c;
    std::cout << "c=" << treelets::eiv::format_double(c);
    for (; k < rows.size() && rows[k].c == c; ++k) {
      const auto& r = rows[k];
      std::cout << " " << r.method << (r.mode.empty() ? "" : "[" + r.mode + "]") << "="
                << (r.mse_mean ? treelets::eiv::format_double(*r.mse_mean) : std::string("NA"));
    }
    std::cout << "\n";
  }
  return 0;
}

// ---- ident-demo ------------------------------------------------------------

struct IdentArgs {
  std::size_t p = 4;
  double c1 = 1.0;
  double c2 = 1.0;
  std::vector<double> tau = {1.0, 1.0, 1.0};
  double sigma = 1.0;
  bool random_loadings = false;
  double perturb = 0.0;
};

int run_ident(const Command& cmd, const IdentArgs& a) {
  if (a.p < 2) throw UsageError("ident-demo: --p must be at least 2");
  if (a.tau.size() != 3) throw UsageError("ident-demo: --tau takes exactly 3 values");
  const auto P = static_cast<Eigen::Index>(a.p);
  Eigen::VectorXd v1 = Eigen::VectorXd::Zero(P), v2 = Eigen::VectorXd::Zero(P);
  if (a.random_loadings) {
    std::mt19937_64 rng(cmd.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index k = 0; k < P; ++k) v1(k) = g(rng);
    for (Eigen::Index k = 0; k < P; ++k) v2(k) = g(rng);
  } else {
    const Eigen::Index half = P / 2;
    v1.head(half).setOnes();
    v2.tail(P - half).setOnes();
  }
  auto [spec_a, spec_b] = treelets::factor::example2_pair(v1, v2, a.c1, a.c2, {a.tau[0], a.tau[1], a.tau[2]}, a.sigma);
  spec_b.loadings(0, 0) += a.perturb;

  const auto cov_a = treelets::factor::population_covariance(spec_a);
  const auto cov_b = treelets::factor::population_covariance(spec_b);
  const double diff = treelets::max_abs_diff(cov_a, cov_b);
  const auto tree_a = treelets::build_treelet(cov_a);
  const auto tree_b = treelets::build_treelet(cov_b);
  const bool same = treelets::same_tree(tree_a, tree_b);
  const bool pass = diff <= 1e-12 && same;

  const auto dir = prepare_out(cmd);
  std::vector<double> v1s(v1.data(), v1.data() + P), v2s(v2.data(), v2.data() + P);
  Json report = {{"v1", v1s},
                 {"v2", v2s},
                 {"spec_a", treelets::factor::to_json(spec_a)},
                 {"spec_b", treelets::factor::to_json(spec_b)},
                 {"max_abs_covariance_diff", diff},
                 {"trees_identical", same},
                 {"tree_a", treelets::to_json(tree_a)},
                 {"tree_b", treelets::to_json(tree_b)},
                 {"pass", pass}};
  write_text(dir / "report.json", dump(report));
  write_text(dir / "manifest.json", dump(cmd.manifest()));
  std::cout << "ident-demo: max|diff|=" << treelets::eiv::format_double(diff) << " trees_identical=" << (same ? "yes" : "no")
            << " -> " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 1;
}

// ---- hier ------------------------------------------------------------------

struct HierArgs {
  std::string input;
  std::string y_col = "y";
  std::string op = "product";
  std::optional<std::size_t> K;
  double k_exponent = 0.5;
  std::size_t max_gen = 5;
  std::string selector = "marginal_correlation";
  std::size_t patience = 2;
  double min_delta = 1e-4;
  double se_margin = 2.0;
  double holdout = 0.2;
  bool latest_only = false;
};

int run_hier(const Command& cmd, const HierArgs& a) {
  if (a.input.empty()) throw UsageError("hier: --input is required");
  namespace h = treelets::hier;
  h::OperatorKind op;
  if (a.op == "product") {
    op = h::OperatorKind::product;
  } else if (a.op == "pair_pca") {
    op = h::OperatorKind::pair_pca;
  } else {
    throw UsageError("hier: --op must be product or pair_pca");
  }
  h::SelectorConfig cfg;
  if (a.selector == "marginal_correlation") {
    cfg.selector = h::Selector::marginal_correlation;
  } else if (a.selector == "forward_stepwise") {
    cfg.selector = h::Selector::forward_stepwise;
  } else {
    throw UsageError("hier: --selector must be marginal_correlation or forward_stepwise");
  }
  cfg.K = a.K;
  cfg.k_exponent = a.k_exponent;
  cfg.max_generations = a.max_gen;
  cfg.patience = a.patience;
  cfg.min_delta = a.min_delta;
  cfg.se_margin = a.se_margin;
  cfg.holdout_fraction = a.holdout;
  cfg.latest_generation_only = a.latest_only;

  const auto table = treelets::csv::read_file(a.input);
  const auto ycol = table.column(a.y_col);
  if (ycol < 0) throw UsageError("hier: no column named '" + a.y_col + "'");
  const Eigen::Index n = table.values.rows();
  const Eigen::Index p = table.values.cols() - 1;
  Eigen::MatrixXd X(n, p);
  std::vector<std::string> columns;
  for (Eigen::Index k = 0, j = 0; k < table.values.cols(); ++k) {
    if (k == ycol) continue;
    X.col(j++) = table.values.col(k);
    columns.push_back(table.header[static_cast<std::size_t>(k)]);
  }
  const Eigen::VectorXd y = table.values.col(ycol);
  const auto res = h::run_hierarchical(X, y, op, cfg, cmd.seed);

  const auto dir = prepare_out(cmd);
  std::vector<double> coef(res.fit.coefficients.data(), res.fit.coefficients.data() + res.fit.coefficients.size());
  Json doc = {{"columns", columns},
              {"trace", h::trace_to_json(res.trace)},
              {"best_generation", res.best_generation},
              {"selected", res.selected_expressions},
              {"intercept", res.fit.intercept},
              {"coefficients", coef},
              {"warnings", res.warnings}};
  write_text(dir / "trace.json", dump(doc));
  std::ostringstream sel;
  sel << "expression,coefficient\n";
  for (std::size_t k = 0; k < res.selected_expressions.size(); ++k)
    sel << res.selected_expressions[k] << "," << treelets::csv::number(coef[k]) << "\n";
  write_text(dir / "selected.csv", sel.str());
  write_text(dir / "manifest.json", dump(cmd.manifest()));

  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "hier: generations=" << res.trace.size() << " best=" << res.best_generation << " selected=";
  for (std::size_t k = 0; k < res.selected_expressions.size(); ++k) std::cout << (k ? " " : "") << res.selected_expressions[k];
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treelet transform, errors-in-variables benchmark and hierarchical feature selection"};
  app.require_subcommand(1);

  Command treelet_cmd(app, "treelet", "Build a treelet model from a CSV data file");
  TreeletArgs ta;
  treelet_cmd.add("--input", "input", ta.input, "Input CSV (header row required)");
  treelet_cmd.add("--basis-level", "basis_level", ta.basis_level, "Also write the basis at this level");
  treelet_cmd.add("--max-level", "max_level", ta.max_level, "Stop after this many merges");
  treelet_cmd.add("--score", "score", ta.score, "Pair score: correlation or covariance");
  treelet_cmd.add("--tie-tolerance", "tie_tolerance", ta.tie_tolerance, "Score tolerance for ties");

  Command sweep_cmd(app, "eiv-sweep", "Monte-Carlo sweep over the loading c in the errors-in-variables model");
  SweepArgs sa;
  sweep_cmd.add("--p", "p", sa.p, "Number of predictors");
  sweep_cmd.add("--gamma", "gamma", sa.gamma, "Regression coefficient on the latent factor");
  sweep_cmd.add("--c-grid", "c_grid", sa.c_grid, "Grid of c values, as multiples of p^-1/2")->delimiter(',');
  sweep_cmd.flag("--c-absolute", "c_absolute", sa.c_absolute, "Read --c-grid as absolute values");
  sweep_cmd.add("--n-train", "n_train", sa.n_train, "Training rows per replicate");
  sweep_cmd.add("--n-test", "n_test", sa.n_test, "Test rows per replicate");
  sweep_cmd.add("--reps", "reps", sa.reps, "Replicates per grid point");
  sweep_cmd.add("--noise-var", "noise_var", sa.noise_var, "Measurement noise variance of every predictor");
  sweep_cmd.add("--q", "q", sa.q, "Principal components used by the PCA baseline");
  sweep_cmd.add("--k-features", "k_features", sa.k_features, "Features kept by treelet regression");

  Command ident_cmd(app, "ident-demo", "Two factor models with one covariance and one treelet tree");
  IdentArgs ia;
  ident_cmd.add("--p", "p", ia.p, "Dimension");
  ident_cmd.add("--c1", "c1", ia.c1, "Third-factor weight on v1");
  ident_cmd.add("--c2", "c2", ia.c2, "Third-factor weight on v2");
  ident_cmd.add("--tau", "tau", ia.tau, "Factor variances tau1 tau2 tau3")->expected(3)->delimiter(',');
  ident_cmd.add("--sigma", "sigma", ia.sigma, "Noise standard deviation");
  ident_cmd.flag("--random-loadings", "random_loadings", ia.random_loadings, "Draw v1, v2 from N(0, I) with --seed");
  ident_cmd.add("--perturb", "perturb", ia.perturb, "Debug: add this to one loading of the second model");

  Command hier_cmd(app, "hier", "Hierarchical feature construction and selection");
  HierArgs ha;
  hier_cmd.add("--input", "input", ha.input, "Input CSV with a response column");
  hier_cmd.add("--y-col", "y_col", ha.y_col, "Name of the response column");
  hier_cmd.add("--op", "op", ha.op, "Combination operator: product or pair_pca");
  hier_cmd.add("--K", "K", ha.K, "Features kept per generation (default ceil(n^K-exponent))");
  hier_cmd.add("--K-exponent", "k_exponent", ha.k_exponent, "Exponent g in K = ceil(n^g)");
  hier_cmd.add("--max-gen", "max_gen", ha.max_gen, "Maximum number of expansions");
  hier_cmd.add("--selector", "selector", ha.selector, "marginal_correlation or forward_stepwise");
  hier_cmd.add("--patience", "patience", ha.patience, "Generations without improvement before stopping");
  hier_cmd.add("--min-delta", "min_delta", ha.min_delta, "Minimum held-out improvement");
  hier_cmd.add("--se-margin", "se_margin", ha.se_margin, "Required improvement in paired standard errors");
  hier_cmd.add("--holdout", "holdout", ha.holdout, "Held-out fraction");
  hier_cmd.flag("--latest-only", "latest_only", ha.latest_only, "Select only among the newest features");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (treelet_cmd.app()->parsed()) {
      treelet_cmd.merge_config();
      return run_treelet(treelet_cmd, ta);
    }
    if (sweep_cmd.app()->parsed()) {
      sweep_cmd.merge_config();
      return run_sweep(sweep_cmd, sa);
    }
    if (ident_cmd.app()->parsed()) {
      ident_cmd.merge_config();
      return run_ident(ident_cmd, ia);
    }
    if (hier_cmd.app()->parsed()) {
      hier_cmd.merge_config();
      return run_hier(hier_cmd, ha);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const treelets::csv::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const treelets::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
