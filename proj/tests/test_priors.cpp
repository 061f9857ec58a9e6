#include <gtest/gtest.h>

#include <map>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "sbamdt/priors.hpp"
#include "test_support.hpp"

using namespace sbamdt;

namespace {

// Knot system with a prescribed spanning tree; s is a dummy 1-D coordinate.
KnotSystem manual_knots(const Matrix& x, std::vector<Edge> edges) {
  KnotSystem ks;
  const int t = static_cast<int>(x.rows());
  ks.s = Matrix::Zero(t, 1);
  for (int i = 0; i < t; ++i) ks.s(i, 0) = i;
  ks.x = x;
  ks.s_center = Vector::Zero(1);
  ks.s_scale = Vector::Ones(1);
  ks.embedding.coords = ks.s;
  ks.mst = SpanningTree{t, std::move(edges)};
  for (int i = 0; i < t; ++i) ks.train_index.push_back(i);
  return ks;
}

// Edges on the path u -> v by depth-first search.
std::vector<Edge> dfs_path(const std::vector<Edge>& edges, int u, int v, int from = -1) {
  if (u == v) return {};
  for (const auto& e : edges) {
    if (!e.touches(u)) continue;
    const int w = e.other(u);
    if (w == from) continue;
    if (w == v) return {e};
    auto rest = dfs_path(edges, w, v, u);
    if (!rest.empty()) {
      rest.insert(rest.begin(), e);
      return rest;
    }
  }
  return {};
}

using RuleKey = std::pair<int, std::vector<int>>;  // (-1, side holding the smallest knot) or (feature, {cutoff index})

// Sampling law of a split rule at the whole knot tree, by enumeration of the
// two-stage draw.
std::map<RuleKey, double> enumerate_law(const KnotSystem& ks, const CutoffGrid& grid, double p_m) {
  const int t = ks.size();
  std::vector<std::vector<int>> cuts(static_cast<std::size_t>(grid.features()));
  for (int j = 0; j < grid.features(); ++j) {
    const double lo = ks.x.col(j).minCoeff(), hi = ks.x.col(j).maxCoeff();
    const auto& g = grid.values[static_cast<std::size_t>(j)];
    for (std::size_t c = 0; c < g.size(); ++c)
      if (g[c] >= lo && g[c] < hi) cuts[static_cast<std::size_t>(j)].push_back(static_cast<int>(c));
  }
  int usable = 0;
  for (const auto& c : cuts) usable += c.empty() ? 0 : 1;
  const bool multi = p_m > 0.0 && t >= 2, uni = p_m < 1.0 && usable > 0;
  const double pm = multi && uni ? p_m : (multi ? 1.0 : 0.0);

  std::map<RuleKey, double> law;
  if (multi) {
    const double pairs = t * (t - 1) / 2.0;
    for (int u = 0; u < t; ++u)
      for (int v = u + 1; v < t; ++v) {
        const auto path = dfs_path(ks.mst.edges, u, v);
        for (const auto& e : path) {
          const auto label = testing_support::components_without(t, ks.mst.edges, e);
          std::vector<int> side;
          for (int w = 0; w < t; ++w)
            if (label[static_cast<std::size_t>(w)] == label[0]) side.push_back(w);
          law[{-1, side}] += pm / pairs / static_cast<double>(path.size());
        }
      }
  }
  if (uni)
    for (int j = 0; j < grid.features(); ++j)
      for (int c : cuts[static_cast<std::size_t>(j)])
        law[{j, {c}}] += (1.0 - pm) / usable / static_cast<double>(cuts[static_cast<std::size_t>(j)].size());
  return law;
}

RuleKey key_of(const SplitRule& r, const CutoffGrid& grid) {
  if (r.is_multivariate()) {
    auto side = r.left_knots;
    if (std::find(side.begin(), side.end(), 0) == side.end()) side = r.right_knots;
    std::sort(side.begin(), side.end());
    return {-1, side};
  }
  const auto& g = grid.values[static_cast<std::size_t>(r.feature)];
  return {r.feature, {static_cast<int>(std::find(g.begin(), g.end(), r.cutoff) - g.begin())}};
}

SplitRule rule_from_key(const RuleKey& k, const KnotSystem& ks, const CutoffGrid& grid) {
  if (k.first >= 0)
    return detail::univariate_rule(ks.root_subtree(), ks, k.first,
                                   grid.values[static_cast<std::size_t>(k.first)][static_cast<std::size_t>(k.second[0])]);
  SplitRule r;
  r.kind = SplitRule::Kind::Multivariate;
  r.left_knots = k.second;
  for (int v = 0; v < ks.size(); ++v)
    if (!std::binary_search(k.second.begin(), k.second.end(), v)) r.right_knots.push_back(v);
  return r;
}

}  // namespace

TEST(PSplit, Examples) {
  EXPECT_DOUBLE_EQ(p_split(0, 0.95, 2.0), 0.95);
  EXPECT_DOUBLE_EQ(p_split(1, 0.95, 2.0), 0.2375);
  EXPECT_LT(p_split(1, 0.95, 200.0), 1e-60);
  EXPECT_EQ((TreePrior{0.95, 2.0, 2}.p_split(2)), 0.0);
}

TEST(PSplit, StrictlyDecreasingInDepth) {
  for (double delta : {0.5, 1.0, 2.0})
    for (int d = 0; d < 20; ++d) EXPECT_LT(p_split(d + 1, 0.95, delta), p_split(d, 0.95, delta));
}

TEST(MultivariateSplitProb, Examples) {
  EXPECT_DOUBLE_EQ(multivariate_split_prob(2, 10), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(multivariate_split_prob(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(multivariate_split_prob(3, 3), 0.5);
}

TEST(CalibrateLambda, ChiSquareQuantile) {
  EXPECT_NEAR(calibrate_lambda(1.0, 3.0), 0.58437 / 3.0, 1e-5);
  EXPECT_NEAR(calibrate_lambda(1.0, 3.0), 0.194792, 1e-6);
  EXPECT_NEAR(calibrate_lambda(1.0, 3.0), 0.19484, 1e-4);
  EXPECT_NEAR(calibrate_lambda(2.0, 3.0), 2.0 * calibrate_lambda(1.0, 3.0), 1e-15);
  EXPECT_THROW(calibrate_lambda(0.0, 3.0), ValidationError);
}

TEST(CalibrateLambda, PriorProbabilityBelowSampleVariance) {
  const double v = 3.0, var = 1.7;
  const double lambda = calibrate_lambda(var, v);
  std::mt19937_64 gen(99);
  std::chi_squared_distribution<double> chi(v);
  const int n = 1000000;
  int below = 0;
  for (int i = 0; i < n; ++i) below += (v * lambda / chi(gen) < var) ? 1 : 0;
  const double frac = static_cast<double>(below) / n;
  EXPECT_GE(frac, 0.89);
  EXPECT_LE(frac, 0.91);
}

TEST(CutoffGrid, InteriorEquallySpaced) {
  const Matrix x{{0.0, 5.0}, {1.0, 5.0}};
  const auto g = CutoffGrid::build(x, 3);
  EXPECT_EQ(g.values[0], (std::vector<double>{0.25, 0.5, 0.75}));
  EXPECT_TRUE(g.values[1].empty());
}

TEST(SampleRule, TwoKnotMultivariateIsDeterministic) {
  const auto ks = manual_knots(Matrix::Zero(2, 0), {{0, 1}});
  const CutoffGrid grid;
  const SplitContext ctx{&ks, &grid, 1.0};
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = sample_rule(ks.root_subtree(), ctx, rng);
    ASSERT_TRUE(d.has_value());
    EXPECT_TRUE(d->rule.is_multivariate());
    EXPECT_EQ(d->rule.left_knots, (std::vector<int>{0}));
    EXPECT_EQ(d->rule.right_knots, (std::vector<int>{1}));
    EXPECT_DOUBLE_EQ(rule_probability(d->rule, ks.root_subtree(), ctx), 1.0);
  }
}

TEST(SampleRule, SingleKnotNodeFallsBackToUnivariate) {
  const auto ks = manual_knots(Matrix{{0.0}, {1.0}}, {{0, 1}});
  const auto grid = CutoffGrid::build(ks.x, 4);
  const SplitContext ctx{&ks, &grid, 1.0};
  Rng rng(2);
  EXPECT_FALSE(sample_rule(ks.subtree_for({0}), ctx, rng).has_value());
  const SplitContext mixed{&ks, &grid, 0.5};
  EXPECT_FALSE(splittable(ks.subtree_for({1}), mixed));
  EXPECT_TRUE(splittable(ks.root_subtree(), mixed));
}

TEST(RuleProbability, UnivariateProduct) {
  Matrix x(2, 10);
  x.row(0).setZero();
  x.row(1).setOnes();
  const auto ks = manual_knots(x, {{0, 1}});
  const auto grid = CutoffGrid::build(x, 100);
  const SplitContext ctx{&ks, &grid, 1.0 / 6.0};
  const auto rule = detail::univariate_rule(ks.root_subtree(), ks, 4, grid.values[4][17]);
  EXPECT_NEAR(rule_probability(rule, ks.root_subtree(), ctx), (5.0 / 6.0) / 1000.0, 1e-18);
  SplitRule multi;
  multi.kind = SplitRule::Kind::Multivariate;
  multi.left_knots = {0};
  multi.right_knots = {1};
  EXPECT_NEAR(rule_probability(multi, ks.root_subtree(), ctx), 1.0 / 6.0, 1e-16);
}

TEST(RuleProbability, ThreeKnotPath) {
  const auto ks = manual_knots(Matrix::Zero(3, 0), {{0, 1}, {1, 2}});
  const CutoffGrid grid;
  const SplitContext ctx{&ks, &grid, 1.0};
  SplitRule r;
  r.kind = SplitRule::Kind::Multivariate;
  r.left_knots = {0};
  r.right_knots = {1, 2};
  // pairs (0,1): 1 of 1 edges; (0,2): 1 of 2 edges; (1,2): none. Total 1.5 / 3.
  EXPECT_NEAR(rule_probability(r, ks.root_subtree(), ctx), 0.5, 1e-15);
  const auto law = enumerate_law(ks, grid, 1.0);
  EXPECT_NEAR(law.at({-1, {0}}), 0.5, 1e-15);
}

TEST(RuleProbability, MatchesEnumerationAndSumsToOne) {
  Rng rng(31);
  for (int t = 2; t <= 5; ++t)
    for (int p = 0; p <= 2; ++p)
      for (int rep = 0; rep < 5; ++rep) {
        const Matrix x = testing_support::random_points(t, p, rng);
        const auto ks = manual_knots(x, testing_support::random_tree(t, rng));
        const auto grid = CutoffGrid::build(x, 1 + static_cast<int>(uniform_index(rng, 5)));
        for (double p_m : {0.0, 0.3, 1.0}) {
          const SplitContext ctx{&ks, &grid, p_m};
          const auto law = enumerate_law(ks, grid, p_m);
          double total = 0.0;
          for (const auto& [key, prob] : law) {
            EXPECT_NEAR(rule_probability(rule_from_key(key, ks, grid), ks.root_subtree(), ctx), prob, 1e-14);
            total += prob;
          }
          if (!law.empty()) {
            EXPECT_NEAR(total, 1.0, 1e-13);
          }
        }
      }
}

TEST(SampleRule, FrequenciesMatchLawChiSquare) {
  Rng rng(77);
  const Matrix x = testing_support::random_points(5, 2, rng);
  const auto ks = manual_knots(x, testing_support::random_tree(5, rng));
  const auto grid = CutoffGrid::build(x, 5);
  const SplitContext ctx{&ks, &grid, 0.4};
  const auto law = enumerate_law(ks, grid, 0.4);
  std::map<RuleKey, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto d = sample_rule(ks.root_subtree(), ctx, rng);
    ASSERT_TRUE(d.has_value());
    ++counts[key_of(d->rule, grid)];
  }
  double stat = 0.0;
  for (const auto& [key, prob] : law) {
    const double e = prob * n;
    const double o = counts.count(key) ? counts[key] : 0;
    stat += (o - e) * (o - e) / e;
  }
  for (const auto& [key, c] : counts) EXPECT_TRUE(law.count(key)) << "rule outside the law";
  const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(law.size() - 1.0), stat));
  EXPECT_GT(pval, 0.01);
}

TEST(SampleRule, DrawnChildrenPartitionAndAreTrees) {
  Rng rng(8);
  const Matrix s = testing_support::random_points(25, 2, rng);
  const Matrix x = testing_support::random_points(25, 2, rng);
  const auto ks = testing_support::all_knots(s, x);
  const auto grid = CutoffGrid::build(x, 10);
  const SplitContext ctx{&ks, &grid, 0.5};
  for (int rep = 0; rep < 200; ++rep) {
    const auto d = sample_rule(ks.root_subtree(), ctx, rng);
    ASSERT_TRUE(d.has_value());
    EXPECT_FALSE(d->rule.left_knots.empty());
    EXPECT_FALSE(d->rule.right_knots.empty());
    EXPECT_EQ(d->left.size() + d->right.size(), 25u);
    EXPECT_TRUE(testing_support::is_tree_on(d->left.vertices, d->left.edges));
    EXPECT_TRUE(testing_support::is_tree_on(d->right.vertices, d->right.edges));
  }
}

class PriorTrees : public ::testing::Test {
 protected:
  // Knots on a 4x4x4 lattice of unstructured values: with univariate splits
  // only and depth below 3, every node can still be split.
  void SetUp() override {
    Rng rng(4);
    const int n = 64;
    s = testing_support::random_points(n, 2, rng);
    x.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = i % 4;
      x(i, 1) = (i / 4) % 4;
      x(i, 2) = i / 16;
    }
    ks = testing_support::all_knots(s, x);
    grid = CutoffGrid::build(x, 3);
    s_std = ks.standardize(s);
  }
  Matrix s, x, s_std;
  KnotSystem ks;
  CutoffGrid grid;
};

TEST_F(PriorTrees, GammaZeroGivesSingleLeaf) {
  Rng rng(1);
  const SplitContext ctx{&ks, &grid, 0.5};
  for (int rep = 0; rep < 50; ++rep)
    EXPECT_EQ(sample_tree_from_prior(TreePrior{0.0, 2.0, -1}, ctx, {0.5, 0.5}, 1.0, s_std, x, rng).size(), 1);
}

TEST_F(PriorTrees, RootSplitFrequency) {
  Rng rng(2);
  const SplitContext ctx{&ks, &grid, 0.5};
  const int n = 10000;
  int split = 0;
  for (int rep = 0; rep < n; ++rep)
    split += sample_tree_from_prior(TreePrior{0.95, 2.0, -1}, ctx, {1.0}, 1.0, s_std, x, rng).size() > 1 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(split) / n, 0.95, 3.0 * std::sqrt(0.95 * 0.05 / n));
}

TEST_F(PriorTrees, ExpectedLeafCountMatchesGaltonWatson) {
  const TreePrior prior{0.95, 1.0, 3};
  // E[L at depth d] = (1 - p_d) + 2 p_d E[L at depth d + 1]
  double expect = 1.0;
  for (int d = prior.max_depth - 1; d >= 0; --d) {
    const double p = prior.gamma / std::pow(1.0 + d, prior.delta);
    expect = (1.0 - p) + 2.0 * p * expect;
  }
  Rng rng(3);
  const SplitContext ctx{&ks, &grid, 0.0};
  std::vector<double> leaves;
  for (int rep = 0; rep < 20000; ++rep)
    leaves.push_back(sample_tree_from_prior(prior, ctx, {1.0}, 1.0, s_std, x, rng).leaf_count());
  EXPECT_TRUE(testing_support::mean_within(leaves, expect, testing_support::sample_var(leaves), 4.0))
      << testing_support::sample_mean(leaves) << " vs " << expect;
}

TEST_F(PriorTrees, LeafWeightsAndDecisionsFollowPrior) {
  Rng rng(5);
  const SplitContext ctx{&ks, &grid, 0.5};
  std::vector<double> mu;
  std::vector<int> decisions(3, 0);
  for (int rep = 0; rep < 4000; ++rep) {
    const auto tree = sample_tree_from_prior(TreePrior{0.95, 1.0, 3}, ctx, {0.2, 0.3, 0.5}, 0.25, s_std, x, rng);
    for (int id : tree.leaves()) mu.push_back(tree.node(id).mu);
    for (int id : tree.internal_nodes()) ++decisions[static_cast<std::size_t>(tree.node(id).decision.level)];
  }
  EXPECT_TRUE(testing_support::mean_within(mu, 0.0, 0.25, 4.0));
  EXPECT_TRUE(testing_support::variance_within(mu, 0.0, 0.25, 3.0 * 0.25 * 0.25, 4.0));
  const double total = decisions[0] + decisions[1] + decisions[2];
  for (int l = 0; l < 3; ++l) {
    const double p = std::vector<double>{0.2, 0.3, 0.5}[static_cast<std::size_t>(l)];
    EXPECT_NEAR(decisions[static_cast<std::size_t>(l)] / total, p, 4.0 * std::sqrt(p * (1 - p) / total));
  }
}

TEST(Hyperparams, ValidateRejectsBadValues) {
  Hyperparams h;
  EXPECT_NO_THROW(h.validate());
  h.gamma = 1.5;
  EXPECT_THROW(h.validate(), ValidationError);
  h = Hyperparams{};
  h.psi = {1.0, 1.0};
  EXPECT_THROW(h.validate(), ValidationError);
  h = Hyperparams{};
  h.v = 0.0;
  EXPECT_THROW(h.validate(), ValidationError);
}
