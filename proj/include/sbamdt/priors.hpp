#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "sbamdt/core.hpp"
#include "sbamdt/decision_tree.hpp"
#include "sbamdt/spectral_graph.hpp"

namespace sbamdt {

enum class Variant { Sk, S2 };

struct Hyperparams {
  int m = 30;
  double gamma = 0.95;
  double delta = 2.0;
  int max_depth = -1;  // negative: no cap
  double p_m = -1.0;   // negative: d_M / (d_M + p)

  // Sk: soft levels {0.5, 1, 2} * q with Dirichlet(psi) on (p_0, ..., p_k)
  std::vector<double> alpha_levels{0.5, 1.0, 2.0};
  double q = 8.0;
  std::vector<double> psi;  // empty: all ones

  // S2: p_A = P(hard) ~ Beta(s_a, s_b); alpha^(h) ~ Gamma(alpha_g, beta_g)
  double s_a = 1.0;
  double s_b = 2.0;
  double alpha_g = 1.0;
  double beta_g = 0.5;
  double alpha_proposal_shape = 20.0;

  double alpha_mu = 3.0;
  double beta_mu = -1.0;  // negative: 0.5 * Var(y) / m on the rescaled scale
  double v = 3.0;
  double lambda = -1.0;   // negative: calibrated from the sample variance

  int n_knots = 100;
  int embed_dim = 0;  // 0: min(3, t - 1)
  int n_cutoffs = 100;

  double p_grow = 0.4;
  double p_prune = 0.4;
  double p_change = 0.2;

  int soft_levels() const { return static_cast<int>(alpha_levels.size()); }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw ValidationError(std::string("invalid hyperparameter: ") + what);
    };
    need(m >= 1, "m >= 1");
    need(gamma >= 0.0 && gamma <= 1.0, "gamma in [0, 1]");
    need(delta > 0.0, "delta > 0");
    need(p_m < 0.0 || p_m <= 1.0, "p_m in [0, 1]");
    need(!alpha_levels.empty(), "at least one soft level");
    for (double a : alpha_levels) need(a > 0.0, "alpha levels > 0");
    need(q >= 1.0, "q >= 1");
    need(psi.empty() || psi.size() == alpha_levels.size() + 1, "psi has k + 1 entries");
    for (double p : psi) need(p > 0.0, "psi > 0");
    need(s_a > 0.0 && s_b > 0.0, "Beta shapes > 0");
    need(alpha_g > 0.0 && beta_g > 0.0, "Gamma shape/rate > 0");
    need(alpha_proposal_shape > 0.0, "alpha proposal shape > 0");
    need(alpha_mu > 0.0, "alpha_mu > 0");
    need(v > 0.0, "v > 0");
    need(n_knots >= 2, "n_knots >= 2");
    need(n_cutoffs >= 1, "n_cutoffs >= 1");
    need(p_grow >= 0.0 && p_prune >= 0.0 && p_change >= 0.0 && p_grow + p_prune + p_change > 0.0,
         "move probabilities");
  }
};

struct TreePrior {
  double gamma = 0.95;
  double delta = 2.0;
  int max_depth = -1;

  double p_split(int depth) const {
    if (max_depth >= 0 && depth >= max_depth) return 0.0;
    return gamma / std::pow(1.0 + depth, delta);
  }
};

inline double p_split(int depth, double gamma, double delta) {
  return TreePrior{gamma, delta, -1}.p_split(depth);
}

inline double multivariate_split_prob(int d_m, int p) {
  if (d_m + p == 0) throw ValidationError("no features");
  return static_cast<double>(d_m) / static_cast<double>(d_m + p);
}

// lambda such that P(sigma^2 < sample_var) = 0.9 under sigma^2 ~ v*lambda/chi2_v.
inline double calibrate_lambda(double sample_var, double v) {
  if (!(sample_var > 0.0)) throw ValidationError("sample variance must be positive");
  const boost::math::chi_squared chi(v);
  return sample_var * boost::math::quantile(chi, 0.10) / v;
}

// Candidate cutoffs per unstructured feature: n equally spaced interior
// points of the observed training range.
struct CutoffGrid {
  std::vector<std::vector<double>> values;

  static CutoffGrid build(const Matrix& train_x, int n) {
    CutoffGrid g;
    for (Eigen::Index j = 0; j < train_x.cols(); ++j) {
      const double lo = train_x.col(j).minCoeff(), hi = train_x.col(j).maxCoeff();
      std::vector<double> v;
      if (hi > lo)
        for (int c = 1; c <= n; ++c) v.push_back(lo + (hi - lo) * c / (n + 1.0));
      g.values.push_back(std::move(v));
    }
    return g;
  }
  int features() const { return static_cast<int>(values.size()); }
};

struct SplitContext {
  const KnotSystem* knots = nullptr;
  const CutoffGrid* grid = nullptr;
  double p_m = 0.5;
};

struct RuleDraw {
  SplitRule rule;
  SubtreeHandle left;
  SubtreeHandle right;
};

namespace detail {

// Index range [first, last) of grid values c with lo <= c < hi.
inline std::pair<std::size_t, std::size_t> valid_cutoffs(const std::vector<double>& grid, double lo,
                                                         double hi) {
  const auto b = std::lower_bound(grid.begin(), grid.end(), lo);
  const auto e = std::lower_bound(grid.begin(), grid.end(), hi);
  if (e <= b) return {0, 0};
  return {static_cast<std::size_t>(b - grid.begin()), static_cast<std::size_t>(e - grid.begin())};
}

struct Availability {
  std::vector<std::pair<std::size_t, std::size_t>> cut_range;  // per feature
  int usable_features = 0;
  bool multivariate = false;
  bool univariate = false;
  double p_multi = 0.0;  // branch probability after renormalisation
};

inline Availability availability(const SubtreeHandle& node_knots, const SplitContext& ctx) {
  Availability a;
  const KnotSystem& ks = *ctx.knots;
  for (int j = 0; j < ctx.grid->features(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k : node_knots.vertices) {
      lo = std::min(lo, ks.x(k, j));
      hi = std::max(hi, ks.x(k, j));
    }
    a.cut_range.push_back(valid_cutoffs(ctx.grid->values[static_cast<std::size_t>(j)], lo, hi));
    if (a.cut_range.back().second > a.cut_range.back().first) ++a.usable_features;
  }
  a.multivariate = ctx.p_m > 0.0 && node_knots.size() >= 2;
  a.univariate = ctx.p_m < 1.0 && a.usable_features > 0;
  a.p_multi = (a.multivariate && a.univariate) ? ctx.p_m : (a.multivariate ? 1.0 : 0.0);
  return a;
}

inline SplitRule univariate_rule(const SubtreeHandle& node_knots, const KnotSystem& ks, int feature,
                                 double cutoff) {
  SplitRule r;
  r.kind = SplitRule::Kind::Univariate;
  r.feature = feature;
  r.cutoff = cutoff;
  for (int k : node_knots.vertices) (ks.x(k, feature) <= cutoff ? r.left_knots : r.right_knots).push_back(k);
  return r;
}

}  // namespace detail

inline bool splittable(const SubtreeHandle& node_knots, const SplitContext& ctx) {
  const auto a = detail::availability(node_knots, ctx);
  return a.multivariate || a.univariate;
}

// Multivariate with probability p_m: uniform knot pair, uniform edge on its
// path, bipartition. Otherwise uniform usable feature, uniform valid cutoff.
inline std::optional<RuleDraw> sample_rule(const SubtreeHandle& node_knots, const SplitContext& ctx, Rng& rng) {
  const auto a = detail::availability(node_knots, ctx);
  if (!a.multivariate && !a.univariate) return std::nullopt;
  const KnotSystem& ks = *ctx.knots;
  if (a.multivariate && uniform01(rng) < a.p_multi) {
    const std::size_t t = node_knots.size();
    const std::size_t i = uniform_index(rng, t);
    std::size_t j = uniform_index(rng, t - 1);
    if (j >= i) ++j;
    const auto path = tree_path(node_knots, node_knots.vertices[i], node_knots.vertices[j]);
    const Edge cut = path[uniform_index(rng, path.size())];
    auto [left, right] = bipartition(node_knots, cut);
    RuleDraw d;
    d.rule.kind = SplitRule::Kind::Multivariate;
    d.rule.left_knots = left.vertices;
    d.rule.right_knots = right.vertices;
    d.left = std::move(left);
    d.right = std::move(right);
    return d;
  }
  std::vector<int> usable;
  for (int j = 0; j < ctx.grid->features(); ++j)
    if (a.cut_range[static_cast<std::size_t>(j)].second > a.cut_range[static_cast<std::size_t>(j)].first) usable.push_back(j);
  const int feature = usable[uniform_index(rng, usable.size())];
  const auto [b, e] = a.cut_range[static_cast<std::size_t>(feature)];
  const double cutoff = ctx.grid->values[static_cast<std::size_t>(feature)][b + uniform_index(rng, e - b)];
  RuleDraw d;
  d.rule = detail::univariate_rule(node_knots, ks, feature, cutoff);
  d.left = ks.subtree_for(d.rule.left_knots);
  d.right = ks.subtree_for(d.rule.right_knots);
  return d;
}

// Probability that sample_rule produces `rule` at a node holding `node_knots`.
// Multivariate rules sum over every (knot pair, path edge) choice yielding the
// same bipartition.
inline double rule_probability(const SplitRule& rule, const SubtreeHandle& node_knots, const SplitContext& ctx) {
  const auto a = detail::availability(node_knots, ctx);
  if (rule.is_multivariate()) {
    if (!a.multivariate) return 0.0;
    const double t = static_cast<double>(node_knots.size());
    double s = 0.0;
    for (int u : rule.left_knots) {
      const auto dist = hop_distances(node_knots, u);
      for (int w : rule.right_knots) s += 1.0 / dist[static_cast<std::size_t>(w)];
    }
    return a.p_multi * s / (t * (t - 1.0) / 2.0);
  }
  if (!a.univariate) return 0.0;
  const auto [b, e] = a.cut_range[static_cast<std::size_t>(rule.feature)];
  if (e <= b) return 0.0;
  return (1.0 - a.p_multi) / a.usable_features / static_cast<double>(e - b);
}

// Galton-Watson draw of a tree; decisions from `decision_probs` (p_0..p_k)
// and leaf weights from N(0, sigma_mu2).
inline DecisionTree sample_tree_from_prior(const TreePrior& prior, const SplitContext& ctx,
                                           const std::vector<double>& decision_probs, double sigma_mu2,
                                           const Matrix& train_s_std, const Matrix& train_x, Rng& rng) {
  const KnotSystem& ks = *ctx.knots;
  DecisionTree tree(std::make_shared<SubtreeHandle>(ks.root_subtree()));
  std::vector<int> open{0};
  while (!open.empty()) {
    const int id = open.back();
    open.pop_back();
    if (uniform01(rng) >= prior.p_split(tree.node(id).depth)) continue;
    auto draw = sample_rule(*tree.node(id).knots, ctx, rng);
    if (!draw) continue;
    const DecisionType dec{static_cast<int>(draw_categorical(rng, decision_probs))};
    tree.grow(id, make_split(std::move(draw->rule), ks, train_s_std, train_x), dec,
              std::make_shared<SubtreeHandle>(std::move(draw->left)),
              std::make_shared<SubtreeHandle>(std::move(draw->right)));
    open.push_back(tree.node(id).left);
    open.push_back(tree.node(id).right);
  }
  const double sd = std::sqrt(sigma_mu2);
  std::vector<double> mu;
  for (int l = 0, L = tree.leaf_count(); l < L; ++l) mu.push_back(sd * draw_normal(rng));
  tree.set_leaf_weights(mu);
  return tree;
}

}  // namespace sbamdt
