// sbamdt command-line driver.
//
//   sbamdt simulate --config sim.ini --out DIR            train.csv, test.csv
//   sbamdt fit      --config fit.ini --train CSV --out DIR model.json, snapshots.ndjson
//   sbamdt predict  --model DIR --data CSV --out DIR      predictions.csv [draws.csv]
//   sbamdt report   --model DIR --data CSV --out DIR      metrics.json, metrics.csv, importance.csv [surfaces.csv]
//   sbamdt diag     --config diag.ini --out DIR           cov_given_TA.json, cov_given_T.json
//
// Exit status: 0 success, 1 invalid input, 2 runtime failure.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "sbamdt/sbamdt.hpp"

namespace fs = std::filesystem;
using namespace sbamdt;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string train, model, data, truth = "f_true";
  bool draws = false;
  int grid = 0;
};

ConfigMap load_config(const Options& o) {
  ConfigMap c = o.config.empty() ? ConfigMap{} : ConfigMap::load(o.config);
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  return c;
}

void warn_unused(const ConfigMap& c) {
  for (const auto& k : c.unused()) std::cerr << "warning: unused config key '" << k << "'\n";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw NumericalError("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const Json& j) { open_out(p) << j.dump(2) << '\n'; }

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> row_of(const Matrix& m, Eigen::Index i) {
  std::vector<double> r(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) r[static_cast<std::size_t>(k)] = m(i, k);
  return r;
}

void require_path(const std::string& p, const char* flag) {
  if (p.empty()) throw ValidationError(std::string(flag) + " is required");
}

void cmd_simulate(const Options& o) {
  const ConfigMap c = load_config(o);
  const SyntheticSpec spec = synthetic_spec_from(c);
  warn_unused(c);
  const auto [train, test] = assemble(spec);
  fs::create_directories(o.out);
  write_dataset(fs::path(o.out) / "train.csv", train);
  write_dataset(fs::path(o.out) / "test.csv", test);
  std::cout << "wrote " << train.data.size() << " training and " << test.data.size() << " test rows to " << o.out
            << '\n';
}

void cmd_fit(const Options& o) {
  require_path(o.train, "--train");
  const ConfigMap c = load_config(o);
  const FitConfig cfg = fit_config_from(c);
  warn_unused(c);
  const auto data = read_dataset(o.train);
  const FittedModel model = fit(data.data, cfg);
  save_model(model, o.out);
  const MoveStats& s = model.stats;
  auto rate = [](long acc, long prop) { return prop > 0 ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0; };
  std::printf("snapshots %zu\n", model.snapshots.size());
  std::printf("grow   %ld/%ld (%.3f)\n", s.grow_accepted, s.grow_proposed, rate(s.grow_accepted, s.grow_proposed));
  std::printf("prune  %ld/%ld (%.3f)\n", s.prune_accepted, s.prune_proposed, rate(s.prune_accepted, s.prune_proposed));
  std::printf("change %ld/%ld (%.3f)\n", s.change_accepted, s.change_proposed,
              rate(s.change_accepted, s.change_proposed));
  if (cfg.variant == Variant::S2)
    std::printf("alpha  %ld/%ld (%.3f)\n", s.alpha_accepted, s.alpha_proposed, rate(s.alpha_accepted, s.alpha_proposed));
}

void cmd_predict(const Options& o) {
  require_path(o.model, "--model");
  require_path(o.data, "--data");
  const FittedModel model = load_model(o.model);
  const auto test = read_dataset(o.data, false);
  const PredictiveDraws d = predict(model, test.data.s, test.data.x);
  fs::create_directories(o.out);
  auto out = open_out(fs::path(o.out) / "predictions.csv");
  out << "id,mean,sd,q05,q95\n";
  const Vector mean = d.mean();
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
    const auto r = row_of(d.y, i);
    const double m = d.y.row(i).mean();
    const double sd = r.size() > 1 ? std::sqrt((d.y.row(i).array() - m).square().sum() / static_cast<double>(r.size() - 1)) : 0.0;
    out << i << ',' << format_double(mean(i)) << ',' << format_double(sd) << ',' << format_double(quantile(r, 0.05))
        << ',' << format_double(quantile(r, 0.95)) << '\n';
  }
  if (o.draws) {
    auto dout = open_out(fs::path(o.out) / "draws.csv");
    for (Eigen::Index i = 0; i < d.y.rows(); ++i) {
      for (Eigen::Index k = 0; k < d.y.cols(); ++k) dout << (k ? "," : "") << format_double(d.y(i, k));
      dout << '\n';
    }
  }
  std::cout << "wrote " << d.y.rows() << " predictions from " << d.y.cols() << " draws\n";
}

// Grid over the bounding box of the test locations; unstructured features at
// each grid point are copied from the nearest test location.
void write_surface(const fs::path& path, const FittedModel& model, const Dataset& test, int side) {
  if (test.s.cols() != 2) throw ValidationError("surface grids need exactly 2 structured features");
  if (side < 2) throw ValidationError("--grid must be >= 2");
  const Eigen::Vector2d lo = test.s.colwise().minCoeff(), hi = test.s.colwise().maxCoeff();
  const Eigen::Index n = static_cast<Eigen::Index>(side) * side;
  Matrix s(n, 2), x(n, test.x.cols());
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      const Eigen::Index r = static_cast<Eigen::Index>(a) * side + b;
      s(r, 0) = lo(0) + (hi(0) - lo(0)) * a / (side - 1);
      s(r, 1) = lo(1) + (hi(1) - lo(1)) * b / (side - 1);
      Eigen::Index nearest = 0;
      (test.s.rowwise() - s.row(r)).rowwise().squaredNorm().minCoeff(&nearest);
      x.row(r) = test.x.row(nearest);
    }
  const PredictiveDraws d = predict(model, s, x);
  const Vector mean = d.mean();
  auto out = open_out(path);
  out << "s_1,s_2,mean,sd\n";
  for (Eigen::Index r = 0; r < n; ++r) {
    const double sd = std::sqrt((d.f.row(r).array() - mean(r)).square().sum() / std::max<double>(1.0, static_cast<double>(d.f.cols() - 1)));
    out << format_double(s(r, 0)) << ',' << format_double(s(r, 1)) << ',' << format_double(mean(r)) << ','
        << format_double(sd) << '\n';
  }
}

void cmd_report(const Options& o) {
  require_path(o.model, "--model");
  require_path(o.data, "--data");
  const FittedModel model = load_model(o.model);
  const bool use_f = o.truth == "f_true";
  if (!use_f && o.truth != "y") throw ValidationError("--truth must be f_true or y");
  const auto test = read_dataset(o.data, !use_f);
  if (use_f && !test.f_true) throw ValidationError("missing column 'f_true' (use --truth y to score against y)");
  const PredictiveDraws d = predict(model, test.data.s, test.data.x);
  const Vector& truth = use_f ? *test.f_true : test.data.y;
  const MetricReport r = evaluate(use_f ? d.f : d.y, truth);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  write_json(dir / "metrics.json", Json{{"rmspe", r.rmspe},
                                        {"mape", r.mape},
                                        {"crps", r.crps},
                                        {"truth", o.truth},
                                        {"n_points", truth.size()},
                                        {"n_draws", d.f.cols()}});
  open_out(dir / "metrics.csv") << "rmspe,mape,crps\n"
                                << format_double(r.rmspe) << ',' << format_double(r.mape) << ','
                                << format_double(r.crps) << '\n';
  const auto imp = feature_importance(model);
  auto iout = open_out(dir / "importance.csv");
  iout << "feature,splits\n";
  for (std::size_t j = 0; j < imp.size(); ++j)
    iout << (j == 0 ? std::string("structured") : "x_" + std::to_string(j)) << ',' << format_double(imp[j]) << '\n';
  if (o.grid > 0) write_surface(dir / "surfaces.csv", model, test.data, o.grid);
  std::printf("rmspe %.6g  mape %.6g  crps %.6g\n", r.rmspe, r.mape, r.crps);
}

Json report_json(const CovarianceReport& r) {
  return Json{{"analytic", matrix_to_json(r.analytic)},
              {"monte_carlo", matrix_to_json(r.monte_carlo)},
              {"mc_se", matrix_to_json(r.mc_se)},
              {"max_abs_dev", r.max_abs_dev},
              {"max_z", r.max_z},
              {"psd", r.psd}};
}

// Prior covariance of f at a few points for trees drawn from the tree prior,
// analytic against Monte Carlo.
void cmd_diag(const Options& o) {
  const ConfigMap c = load_config(o);
  SyntheticSpec spec = synthetic_spec_from(c);
  Hyperparams h = hyperparams_from(c);
  const int n_trees = c.get_int("diag_trees", 2);
  const int n_points = c.get_int("diag_points", 4);
  const long n_draws = c.get_int("diag_draws", 100000L);
  warn_unused(c);
  if (h.beta_mu <= 0.0) h.beta_mu = 1.0;
  if (h.p_m < 0.0) h.p_m = 0.5;
  h.validate();
  leaf_prior_variance(h.alpha_mu, h.beta_mu);
  if (n_trees < 1 || n_points < 1 || n_draws < 2) throw ValidationError("diag_trees, diag_points >= 1 and diag_draws >= 2");
  spec.n_test = 1;
  if (spec.n_train < n_points) throw ValidationError("n_train must be at least diag_points");
  const Dataset data = assemble(spec).first.data;

  Rng rng(spec.seed);
  const int t = std::min<int>(h.n_knots, static_cast<int>(data.size()));
  const KnotSystem ks = build_knot_system(data.s, data.x, choose_knots(data.size(), t, rng), h.embed_dim);
  const CutoffGrid grid = CutoffGrid::build(data.x, h.n_cutoffs);
  const Matrix s_std = ks.standardize(data.s);
  const SplitContext ctx{&ks, &grid, h.p_m};
  std::vector<double> probs = h.psi.empty() ? std::vector<double>(h.alpha_levels.size() + 1, 1.0) : h.psi;
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  Softness soft;
  for (double a : h.alpha_levels) soft.alphas.push_back(a * h.q);

  std::vector<DecisionTree> trees;
  for (int k = 0; k < n_trees; ++k)
    trees.push_back(sample_tree_from_prior(TreePrior{h.gamma, h.delta, h.max_depth}, ctx, probs, 1.0, s_std, data.x, rng));
  const Matrix pts_s = s_std.topRows(n_points), pts_x = data.x.topRows(n_points);
  std::vector<Matrix> phis;
  for (const auto& tr : trees) phis.push_back(point_basis(tr, soft, ks, pts_s, pts_x));

  const auto given_ta = mc_prior_cov_given_TA(phis, h.alpha_mu, h.beta_mu, n_draws, rng);
  const auto given_t = mc_prior_cov_given_T(trees, std::vector<Softness>(trees.size(), soft), probs, ks, pts_s, pts_x,
                                           h.alpha_mu, h.beta_mu, n_draws, rng);
  fs::create_directories(o.out);
  Json leaves = Json::array();
  for (const auto& tr : trees) leaves.push_back(tr.leaf_count());
  Json a = report_json(given_ta), b = report_json(given_t);
  a["leaves"] = b["leaves"] = leaves;
  a["draws"] = b["draws"] = n_draws;
  write_json(fs::path(o.out) / "cov_given_TA.json", a);
  write_json(fs::path(o.out) / "cov_given_T.json", b);
  std::printf("given T,A: max|dev| %.3g  max z %.2f  psd %d\n", given_ta.max_abs_dev, given_ta.max_z, given_ta.psd);
  std::printf("given T:   max|dev| %.3g  max z %.2f  psd %d\n", given_t.max_abs_dev, given_t.max_z, given_t.psd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft Bayesian additive decision trees with structured features"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "overrides the config seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* sim = app.add_subcommand("simulate", "write synthetic train/test CSVs");
  common(sim);
  auto* fit_cmd = app.add_subcommand("fit", "run the sampler and save the posterior");
  common(fit_cmd);
  fit_cmd->add_option("--train", o.train, "training CSV")->required();
  auto* pred = app.add_subcommand("predict", "posterior predictive summaries");
  common(pred);
  pred->add_option("--model", o.model, "fitted model directory")->required();
  pred->add_option("--data", o.data, "CSV of points to predict")->required();
  pred->add_flag("--draws", o.draws, "also write draws.csv");
  auto* rep = app.add_subcommand("report", "metrics, feature importance, surfaces");
  common(rep);
  rep->add_option("--model", o.model, "fitted model directory")->required();
  rep->add_option("--data", o.data, "test CSV")->required();
  rep->add_option("--truth", o.truth, "column to score against: f_true or y");
  rep->add_option("--grid", o.grid, "surface grid points per axis (0: none)");
  auto* diag = app.add_subcommand("diag", "analytic vs Monte Carlo prior covariance");
  common(diag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (*sim) cmd_simulate(o);
    if (*fit_cmd) cmd_fit(o);
    if (*pred) cmd_predict(o);
    if (*rep) cmd_report(o);
    if (*diag) cmd_diag(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
