#pragma once

// Hard-soft semi-multivariate decision trees: split rules over knot subsets,
// nearest-knot distances, gate probabilities and the leaf-path basis Phi.

#include <cassert>
#include <memory>
#include <span>
#include <vector>

#include "sbamdt/core.hpp"
#include "sbamdt/spectral_graph.hpp"

namespace sbamdt {

// 0 = hard, c >= 1 = soft level c.
struct DecisionType {
  int level = 0;
  static DecisionType hard() { return {0}; }
  static DecisionType soft(int c) { return {c}; }
  bool is_hard() const { return level == 0; }
  bool operator==(const DecisionType&) const = default;
};

// Gate slopes for the soft levels: alphas[c - 1] is used by level c.
struct Softness {
  std::vector<double> alphas;
  int levels() const { return static_cast<int>(alphas.size()); }
  double alpha(int level) const { return alphas[static_cast<std::size_t>(level - 1)]; }
};

struct SplitRule {
  enum class Kind { Univariate, Multivariate };
  Kind kind = Kind::Univariate;
  int feature = -1;     // univariate
  double cutoff = 0.0;  // univariate
  std::vector<int> left_knots;   // sorted knot ids routed left
  std::vector<int> right_knots;  // sorted knot ids routed right

  bool is_multivariate() const { return kind == Kind::Multivariate; }
};

// Rule-dependent quantities of an internal node; immutable once built and
// shared between tree copies.
struct SplitData {
  SplitRule rule;
  double c_eta = 1.0;
  Vector train_gap;  // (d_R - d_L) / C_eta for every training point
};

struct Node {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::shared_ptr<const SubtreeHandle> knots;
  std::shared_ptr<const SplitData> split;  // null for leaves
  DecisionType decision;
  double mu = 0.0;

  bool is_leaf() const { return left < 0; }
};

using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

struct KnotDistances {
  double left = 0.0;
  double right = 0.0;
};

inline double knot_distance(const RowRef& s_std, const RowRef& x, const SplitRule& rule,
                            const KnotSystem& ks, int knot) {
  if (rule.is_multivariate()) return (ks.s.row(knot) - s_std).norm();
  return std::abs(x(rule.feature) - ks.x(knot, rule.feature));
}

// Minimum distance to the knots on each side, measured in the rule's feature
// space (standardized structured coordinates or the single unstructured
// feature).
inline KnotDistances knot_distances(const RowRef& s_std, const RowRef& x, const SplitRule& rule,
                                    const KnotSystem& ks) {
  if (rule.left_knots.empty() || rule.right_knots.empty())
    throw ValidationError("split rule has an empty knot side");
  KnotDistances d{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (int k : rule.left_knots) d.left = std::min(d.left, knot_distance(s_std, x, rule, ks, k));
  for (int k : rule.right_knots) d.right = std::min(d.right, knot_distance(s_std, x, rule, ks, k));
  return d;
}

// Probability of routing left given the normalized gap (d_R - d_L) / C.
inline double gate_from_gap(double gap, DecisionType decision, const Softness& softness) {
  if (decision.is_hard()) return gap >= 0.0 ? 1.0 : 0.0;
  return 1.0 / (1.0 + std::exp(-softness.alpha(decision.level) * gap));
}

inline double gate_probability(double d_left, double d_right, double c_eta, DecisionType decision,
                               const Softness& softness) {
  assert(c_eta > 0.0);
  if (decision.is_hard()) return d_left <= d_right ? 1.0 : 0.0;
  return gate_from_gap((d_right - d_left) / c_eta, decision, softness);
}

// Maximum nearest-knot distance (either side) over the given points; a zero
// maximum is replaced by 1.
inline double compute_normalizer(const SplitRule& rule, const KnotSystem& ks, const Matrix& s_std,
                                 const Matrix& x) {
  if (s_std.rows() == 0) throw ValidationError("normalizer needs at least one observation");
  double c = 0.0;
  for (Eigen::Index i = 0; i < s_std.rows(); ++i) {
    const auto d = knot_distances(s_std.row(i), x.row(i), rule, ks);
    c = std::max({c, d.left, d.right});
  }
  return c > 0.0 ? c : 1.0;
}

inline Vector split_gaps(const SplitRule& rule, double c_eta, const KnotSystem& ks,
                         const Matrix& s_std, const Matrix& x) {
  Vector gap(s_std.rows());
  for (Eigen::Index i = 0; i < s_std.rows(); ++i) {
    const auto d = knot_distances(s_std.row(i), x.row(i), rule, ks);
    gap(i) = (d.right - d.left) / c_eta;
  }
  return gap;
}

// Normalizer and training gaps in one pass over the data.
inline std::shared_ptr<const SplitData> make_split(SplitRule rule, const KnotSystem& ks,
                                                   const Matrix& train_s_std, const Matrix& train_x) {
  const Eigen::Index n = train_s_std.rows();
  if (n == 0) throw ValidationError("normalizer needs at least one observation");
  Vector d_left(n), d_right(n);
  double c = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto d = knot_distances(train_s_std.row(i), train_x.row(i), rule, ks);
    d_left(i) = d.left;
    d_right(i) = d.right;
    c = std::max({c, d.left, d.right});
  }
  auto out = std::make_shared<SplitData>();
  out->c_eta = c > 0.0 ? c : 1.0;
  out->train_gap = (d_right - d_left) / out->c_eta;
  out->rule = std::move(rule);
  return out;
}

class DecisionTree {
 public:
  DecisionTree() = default;

  explicit DecisionTree(std::shared_ptr<const SubtreeHandle> root_knots) {
    Node root;
    root.knots = std::move(root_knots);
    nodes_.push_back(std::move(root));
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Leaves in depth-first, left-first order; this order indexes Phi and M.
  std::vector<int> leaves() const {
    std::vector<int> out;
    collect_leaves(0, out);
    return out;
  }

  int leaf_count() const {
    int c = 0;
    for (const auto& n : nodes_) c += n.is_leaf() ? 1 : 0;
    return c;
  }

  std::vector<int> internal_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (!nodes_[static_cast<std::size_t>(i)].is_leaf()) out.push_back(i);
    return out;
  }

  // Internal nodes whose two children are both leaves.
  std::vector<int> prunable_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.is_leaf() && node(n.left).is_leaf() && node(n.right).is_leaf()) out.push_back(i);
    }
    return out;
  }

  std::vector<double> leaf_weights() const {
    std::vector<double> out;
    for (int l : leaves()) out.push_back(node(l).mu);
    return out;
  }

  void set_leaf_weights(std::span<const double> mu) {
    const auto ls = leaves();
    assert(ls.size() == mu.size());
    for (std::size_t i = 0; i < ls.size(); ++i) node(ls[i]).mu = mu[i];
  }

  // Turn leaf `id` into an internal node with two leaf children.
  void grow(int id, std::shared_ptr<const SplitData> split, DecisionType decision,
            std::shared_ptr<const SubtreeHandle> left_knots,
            std::shared_ptr<const SubtreeHandle> right_knots) {
    assert(node(id).is_leaf());
    Node l, r;
    l.parent = r.parent = id;
    l.depth = r.depth = node(id).depth + 1;
    l.knots = std::move(left_knots);
    r.knots = std::move(right_knots);
    nodes_.push_back(std::move(l));
    nodes_.push_back(std::move(r));
    Node& n = node(id);
    n.left = size() - 2;
    n.right = size() - 1;
    n.split = std::move(split);
    n.decision = decision;
    n.mu = 0.0;
  }

  // Collapse an internal node whose children are both leaves.
  void prune(int id) {
    const Node& n = node(id);
    assert(!n.is_leaf() && node(n.left).is_leaf() && node(n.right).is_leaf());
    const int a = n.left, b = n.right;
    std::vector<int> remap(nodes_.size(), -1);
    std::vector<Node> kept;
    kept.reserve(nodes_.size() - 2);
    for (int i = 0; i < size(); ++i) {
      if (i == a || i == b) continue;
      remap[static_cast<std::size_t>(i)] = static_cast<int>(kept.size());
      kept.push_back(nodes_[static_cast<std::size_t>(i)]);
    }
    for (auto& k : kept) {
      if (k.parent >= 0) k.parent = remap[static_cast<std::size_t>(k.parent)];
      if (k.left >= 0) {
        k.left = remap[static_cast<std::size_t>(k.left)];
        k.right = remap[static_cast<std::size_t>(k.right)];
      }
    }
    Node& p = kept[static_cast<std::size_t>(remap[static_cast<std::size_t>(id)])];
    p.left = p.right = -1;
    p.split.reset();
    p.decision = DecisionType::hard();
    p.mu = 0.0;
    nodes_ = std::move(kept);
  }

 private:
  void collect_leaves(int id, std::vector<int>& out) const {
    const Node& n = node(id);
    if (n.is_leaf()) {
      out.push_back(id);
      return;
    }
    collect_leaves(n.left, out);
    collect_leaves(n.right, out);
  }

  std::vector<Node> nodes_;
};

// Phi matrix (points x leaves) given per-node gap vectors. `gap_of(id)` must
// return the gap vector of internal node `id` over the points.
template <class GapLookup>
Matrix basis_from_gaps(const DecisionTree& tree, const Softness& softness, Eigen::Index n_points,
                       GapLookup&& gap_of) {
  const auto leaves = tree.leaves();
  Matrix phi(n_points, static_cast<Eigen::Index>(leaves.size()));
  std::vector<Vector> reach(static_cast<std::size_t>(tree.size()));
  reach[0] = Vector::Ones(n_points);
  // parents precede children in a preorder walk
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& n = tree.node(id);
    if (n.is_leaf()) continue;
    const Vector& gap = gap_of(id);
    Vector z(n_points);
    for (Eigen::Index i = 0; i < n_points; ++i) z(i) = gate_from_gap(gap(i), n.decision, softness);
    reach[static_cast<std::size_t>(n.left)] = reach[static_cast<std::size_t>(id)].cwiseProduct(z);
    reach[static_cast<std::size_t>(n.right)] =
        reach[static_cast<std::size_t>(id)].cwiseProduct((1.0 - z.array()).matrix());
    stack.push_back(n.right);
    stack.push_back(n.left);
  }
  for (std::size_t l = 0; l < leaves.size(); ++l)
    phi.col(static_cast<Eigen::Index>(l)) = reach[static_cast<std::size_t>(leaves[l])];
  return phi;
}

// Phi over the training data, from the cached gaps.
inline Matrix training_basis(const DecisionTree& tree, const Softness& softness, Eigen::Index n_train) {
  return basis_from_gaps(tree, softness, n_train,
                         [&](int id) -> const Vector& { return tree.node(id).split->train_gap; });
}

// Gaps of every internal node over arbitrary (standardized) points.
inline std::vector<Vector> node_gaps(const DecisionTree& tree, const KnotSystem& ks, const Matrix& s_std,
                                     const Matrix& x) {
  std::vector<Vector> gaps(static_cast<std::size_t>(tree.size()));
  for (int id = 0; id < tree.size(); ++id) {
    const Node& n = tree.node(id);
    if (!n.is_leaf()) gaps[static_cast<std::size_t>(id)] = split_gaps(n.split->rule, n.split->c_eta, ks, s_std, x);
  }
  return gaps;
}

inline Matrix point_basis(const DecisionTree& tree, const Softness& softness, const KnotSystem& ks,
                          const Matrix& s_std, const Matrix& x) {
  const auto gaps = node_gaps(tree, ks, s_std, x);
  return basis_from_gaps(tree, softness, s_std.rows(),
                         [&](int id) -> const Vector& { return gaps[static_cast<std::size_t>(id)]; });
}

// Phi_1..Phi_L for one point.
inline Vector leaf_basis(const RowRef& s_std, const RowRef& x, const DecisionTree& tree,
                         const Softness& softness, const KnotSystem& ks) {
  return point_basis(tree, softness, ks, Matrix(s_std), Matrix(x)).row(0).transpose();
}

inline double leaf_path_probability(const RowRef& s_std, const RowRef& x, const DecisionTree& tree,
                                    int leaf_index, const Softness& softness, const KnotSystem& ks) {
  // walk the root-to-leaf path
  const int target = tree.leaves().at(static_cast<std::size_t>(leaf_index));
  double p = 1.0;
  for (int child = target; tree.node(child).parent >= 0; child = tree.node(child).parent) {
    const Node& par = tree.node(tree.node(child).parent);
    const auto d = knot_distances(s_std, x, par.split->rule, ks);
    const double z = gate_probability(d.left, d.right, par.split->c_eta, par.decision, softness);
    p *= (par.left == child) ? z : 1.0 - z;
  }
  return p;
}

inline double tree_predict(const RowRef& s_std, const RowRef& x, const DecisionTree& tree,
                           const Softness& softness, const KnotSystem& ks) {
  const Vector phi = leaf_basis(s_std, x, tree, softness, ks);
  const auto mu = tree.leaf_weights();
  return phi.dot(Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size())));
}

}  // namespace sbamdt
