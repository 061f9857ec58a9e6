#pragma once

// Backfitting Metropolis-Hastings-within-Gibbs sampler for sums of hard-soft
// semi-multivariate decision trees (Sk and S2 variants).

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "sbamdt/core.hpp"
#include "sbamdt/decision_tree.hpp"
#include "sbamdt/likelihood.hpp"
#include "sbamdt/priors.hpp"

namespace sbamdt {

// Training data as seen by the sampler: standardized structured coordinates,
// unstructured features and the rescaled response.
struct TrainingData {
  Matrix s_std;
  Matrix x;
  Vector y;
  Eigen::Index size() const { return y.size(); }
};

struct SamplerConfig {
  Variant variant = Variant::Sk;
  Hyperparams hyper;  // beta_mu, lambda and p_m must already be resolved
  bool hard_only = false;
  bool fix_sigma2 = false;
  bool fix_sigma_mu2 = false;
  bool fix_p_a = false;
  double init_sigma2 = 0.01;
  double init_sigma_mu2 = -1.0;   // negative: prior mean (or beta_mu if undefined)
  std::vector<double> init_p_a;   // empty: prior mean
  double init_alpha = -1.0;       // negative: prior mean alpha_g / beta_g
};

struct PosteriorState {
  std::vector<DecisionTree> trees;
  std::vector<double> alpha;  // S2 only: per-tree softness
  double sigma2 = 1.0;
  double sigma_mu2 = 1.0;
  std::vector<double> p_a;  // Sk: (p_0..p_k); S2: {P(hard)}
};

struct MoveStats {
  long grow_proposed = 0, grow_accepted = 0;
  long prune_proposed = 0, prune_accepted = 0;
  long change_proposed = 0, change_accepted = 0;
  long alpha_proposed = 0, alpha_accepted = 0;

  MoveStats& operator+=(const MoveStats& o) {
    grow_proposed += o.grow_proposed;
    grow_accepted += o.grow_accepted;
    prune_proposed += o.prune_proposed;
    prune_accepted += o.prune_accepted;
    change_proposed += o.change_proposed;
    change_accepted += o.change_accepted;
    alpha_proposed += o.alpha_proposed;
    alpha_accepted += o.alpha_accepted;
    return *this;
  }
};

// Result of a tree proposal; `valid == false` means the move was aborted.
struct Proposal {
  bool valid = false;
  DecisionTree tree;
  Matrix phi;
  double log_ratio = kNegInf;
  int node = -1;
  std::vector<double> level_log_weight;  // GROW: log p_l + log IL_l
};

inline bool mh_accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  if (log_ratio == kNegInf || std::isnan(log_ratio)) return false;
  return std::log(uniform01(rng)) < log_ratio;
}

struct InvGammaParams {
  double shape;
  double scale;
};

inline InvGammaParams sigma2_conditional(double residual_ss, Eigen::Index n, double v, double lambda) {
  return {(static_cast<double>(n) + v) / 2.0, 0.5 * residual_ss + v * lambda / 2.0};
}

inline InvGammaParams sigma_mu2_conditional(double leaf_ss, long total_leaves, double alpha_mu, double beta_mu) {
  return {alpha_mu + 0.5 * static_cast<double>(total_leaves), 0.5 * leaf_ss + beta_mu};
}

inline double sample_inv_gamma(const InvGammaParams& p, Rng& rng) { return draw_inv_gamma(rng, p.shape, p.scale); }

// Sk: Dirichlet(counts + psi).
inline std::vector<double> sample_p_a_dirichlet(const std::vector<long>& counts, const std::vector<double>& psi,
                                                Rng& rng) {
  std::vector<double> g(counts.size());
  double s = 0.0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    g[l] = draw_gamma(rng, static_cast<double>(counts[l]) + psi[l], 1.0);
    s += g[l];
  }
  for (double& x : g) x /= s;
  return g;
}

// S2: P(hard) ~ Beta(#hard + s_a, #soft + s_b).
inline double sample_p_a_beta(long n_hard, long n_soft, double s_a, double s_b, Rng& rng) {
  const double a = draw_gamma(rng, static_cast<double>(n_hard) + s_a, 1.0);
  const double b = draw_gamma(rng, static_cast<double>(n_soft) + s_b, 1.0);
  return a / (a + b);
}

// Normalized decision weights w_l proportional to exp(log p_l + log IL_l).
inline std::vector<double> decision_weights(const std::vector<double>& log_weight) {
  const double lse = log_sum_exp(log_weight);
  std::vector<double> w(log_weight.size());
  for (std::size_t l = 0; l < w.size(); ++l) w[l] = std::exp(log_weight[l] - lse);
  return w;
}

inline DecisionType sample_decision(const std::vector<double>& log_weight, Rng& rng) {
  return DecisionType{static_cast<int>(draw_categorical(rng, decision_weights(log_weight)))};
}

// One MH step for a tree's softness parameter with a Gamma(d, d / alpha)
// random-walk proposal. `log_lik(a)` is the conditional log-likelihood under
// softness a. Returns the new value and whether it was accepted.
inline std::pair<double, bool> sample_alpha_h(double alpha, double alpha_g, double beta_g, double proposal_shape,
                                              const std::function<double(double)>& log_lik, Rng& rng) {
  const double d = proposal_shape;
  const double cand = draw_gamma(rng, d, d / alpha);
  if (!(cand > 0.0)) return {alpha, false};
  const double log_tr = (d * std::log(d / cand) + (d - 1.0) * std::log(alpha) - d * alpha / cand) -
                        (d * std::log(d / alpha) + (d - 1.0) * std::log(cand) - d * cand / alpha);
  const double log_pr = (alpha_g - 1.0) * std::log(cand / alpha) - beta_g * (cand - alpha);
  const double log_lr = log_lik(cand) - log_lik(alpha);
  if (mh_accept(log_tr + log_pr + log_lr, rng)) return {cand, true};
  return {alpha, false};
}

namespace detail {

// Phi with leaf column `pos` split into (reach * z, reach * (1 - z)).
inline Matrix expand_basis(const Matrix& phi, Eigen::Index pos, const Vector& z) {
  Matrix out(phi.rows(), phi.cols() + 1);
  out.leftCols(pos) = phi.leftCols(pos);
  out.col(pos) = phi.col(pos).cwiseProduct(z);
  out.col(pos + 1) = phi.col(pos) - out.col(pos);
  out.rightCols(phi.cols() - pos - 1) = phi.rightCols(phi.cols() - pos - 1);
  return out;
}

// Phi with leaf columns pos, pos + 1 merged.
inline Matrix collapse_basis(const Matrix& phi, Eigen::Index pos) {
  Matrix out(phi.rows(), phi.cols() - 1);
  out.leftCols(pos) = phi.leftCols(pos);
  out.col(pos) = phi.col(pos) + phi.col(pos + 1);
  out.rightCols(phi.cols() - pos - 2) = phi.rightCols(phi.cols() - pos - 2);
  return out;
}

inline Vector gate_vector(const Vector& gap, DecisionType dec, const Softness& soft) {
  Vector z(gap.size());
  for (Eigen::Index i = 0; i < gap.size(); ++i) z(i) = gate_from_gap(gap(i), dec, soft);
  return z;
}

inline Eigen::Index leaf_position(const DecisionTree& tree, int leaf_id) {
  const auto ls = tree.leaves();
  return static_cast<Eigen::Index>(std::find(ls.begin(), ls.end(), leaf_id) - ls.begin());
}

}  // namespace detail

class Sampler {
 public:
  Sampler(const TrainingData& data, const KnotSystem& knots, const CutoffGrid& grid, SamplerConfig config)
      : data_(&data), knots_(&knots), grid_(&grid), cfg_(std::move(config)) {
    const Hyperparams& hp = cfg_.hyper;
    hp.validate();
    if (hp.beta_mu <= 0.0 || hp.lambda <= 0.0 || hp.p_m < 0.0)
      throw ValidationError("sampler needs resolved beta_mu, lambda and p_m");
    ctx_ = SplitContext{knots_, grid_, hp.p_m};
    prior_ = TreePrior{hp.gamma, hp.delta, hp.max_depth};
    root_knots_ = std::make_shared<SubtreeHandle>(knots.root_subtree());
    psi_ = hp.psi.empty() ? std::vector<double>(static_cast<std::size_t>(hp.soft_levels() + 1), 1.0) : hp.psi;
    init_state();
  }

  const PosteriorState& state() const { return state_; }
  PosteriorState& mutable_state() { return state_; }
  const MoveStats& stats() const { return stats_; }
  const SamplerConfig& config() const { return cfg_; }
  const SplitContext& split_context() const { return ctx_; }
  const TreePrior& tree_prior() const { return prior_; }
  const Matrix& basis(int h) const { return phi_[static_cast<std::size_t>(h)]; }
  const Vector& tree_fit(int h) const { return fit_[static_cast<std::size_t>(h)]; }
  const Vector& total_fit() const { return total_; }
  int levels() const { return cfg_.variant == Variant::Sk ? cfg_.hyper.soft_levels() : 1; }

  // Decision probabilities (p_0, ..., p_k) with p_0 = hard.
  std::vector<double> decision_probs() const {
    if (cfg_.hard_only) {
      std::vector<double> p(static_cast<std::size_t>(levels() + 1), 0.0);
      p[0] = 1.0;
      return p;
    }
    if (cfg_.variant == Variant::Sk) return state_.p_a;
    return {state_.p_a[0], 1.0 - state_.p_a[0]};
  }

  Softness softness(int h) const { return softness_for(h, cfg_.variant == Variant::S2 ? state_.alpha[static_cast<std::size_t>(h)] : 0.0); }

  Softness softness_for(int h, double alpha) const {
    (void)h;
    if (cfg_.variant == Variant::Sk) {
      Softness s;
      for (double a : cfg_.hyper.alpha_levels) s.alphas.push_back(a * cfg_.hyper.q);
      return s;
    }
    return Softness{{cfg_.hyper.q * alpha}};
  }

  // R^(h) = Y - sum_{j != h} g_j
  Vector residual(int h) const { return data_->y - (total_ - fit_[static_cast<std::size_t>(h)]); }

  // Replace tree h (its decisions and leaf weights included) and refresh caches.
  void set_tree(int h, DecisionTree tree) {
    state_.trees[static_cast<std::size_t>(h)] = std::move(tree);
    refresh_tree(h);
  }

  double log_integrated(const Vector& r, const Matrix& phi) const {
    return integrated_likelihood(LeafStats::from(r, phi), state_.sigma2, state_.sigma_mu2);
  }

  // log of the GROW Hastings ratio for splitting `leaf_id` with `draw`;
  // marginalises the new node's decision.
  Proposal grow_proposal(int h, const Vector& r, int leaf_id, RuleDraw draw) const {
    const DecisionTree& tree = state_.trees[static_cast<std::size_t>(h)];
    const Matrix& phi = phi_[static_cast<std::size_t>(h)];
    const Softness soft = softness(h);
    const Node& leaf = tree.node(leaf_id);
    const double p_rule = rule_probability(draw.rule, *leaf.knots, ctx_);
    Proposal prop;
    prop.node = leaf_id;
    prop.tree = tree;
    prop.tree.grow(leaf_id, make_split(std::move(draw.rule), *knots_, data_->s_std, data_->x), DecisionType::hard(),
                   std::make_shared<SubtreeHandle>(std::move(draw.left)),
                   std::make_shared<SubtreeHandle>(std::move(draw.right)));
    const auto& split = *prop.tree.node(leaf_id).split;
    const Eigen::Index pos = detail::leaf_position(tree, leaf_id);
    const auto probs = decision_probs();
    prop.level_log_weight.assign(probs.size(), kNegInf);
    for (std::size_t l = 0; l < probs.size(); ++l) {
      if (!(probs[l] > 0.0)) continue;
      const Matrix cand = detail::expand_basis(phi, pos, detail::gate_vector(split.train_gap, DecisionType{static_cast<int>(l)}, soft));
      prop.level_log_weight[l] = std::log(probs[l]) + log_integrated(r, cand);
    }
    const int d = leaf.depth;
    const double log_tr = std::log(cfg_.hyper.p_prune) + std::log(static_cast<double>(tree.leaf_count())) -
                          std::log(cfg_.hyper.p_grow) -
                          std::log(static_cast<double>(prop.tree.prunable_nodes().size())) - std::log(p_rule);
    const double log_tsr = log_structure_ratio(d, p_rule);
    const double log_lr = log_sum_exp(prop.level_log_weight) - log_integrated(r, phi);
    prop.log_ratio = log_tr + log_tsr + log_lr;
    prop.valid = std::isfinite(prop.log_ratio) || prop.log_ratio == kNegInf;
    return prop;
  }

  // log of the PRUNE Hastings ratio for collapsing `node_id`; the current
  // side marginalises the pruned node's decision.
  Proposal prune_proposal(int h, const Vector& r, int node_id) const {
    const DecisionTree& tree = state_.trees[static_cast<std::size_t>(h)];
    const Matrix& phi = phi_[static_cast<std::size_t>(h)];
    const Softness soft = softness(h);
    const Node& n = tree.node(node_id);
    const double p_rule = rule_probability(n.split->rule, *n.knots, ctx_);
    const Eigen::Index pos = detail::leaf_position(tree, n.left);
    Proposal prop;
    prop.node = node_id;
    prop.tree = tree;
    prop.tree.prune(node_id);
    prop.phi = detail::collapse_basis(phi, pos);
    const auto probs = decision_probs();
    std::vector<double> cur(probs.size(), kNegInf);
    for (std::size_t l = 0; l < probs.size(); ++l) {
      if (!(probs[l] > 0.0)) continue;
      const Matrix cand = detail::expand_basis(prop.phi, pos, detail::gate_vector(n.split->train_gap, DecisionType{static_cast<int>(l)}, soft));
      cur[l] = std::log(probs[l]) + log_integrated(r, cand);
    }
    const double log_tr = std::log(cfg_.hyper.p_grow) + std::log(static_cast<double>(tree.prunable_nodes().size())) +
                          std::log(p_rule) - std::log(cfg_.hyper.p_prune) -
                          std::log(static_cast<double>(tree.leaf_count() - 1));
    const double log_tsr = -log_structure_ratio(n.depth, p_rule);
    const double log_lr = log_integrated(r, prop.phi) - log_sum_exp(cur);
    prop.log_ratio = log_tr + log_tsr + log_lr;
    prop.valid = true;
    return prop;
  }

  // log of the CHANGE Hastings ratio for setting `node_id`'s decision to `to`.
  Proposal change_proposal(int h, const Vector& r, int node_id, DecisionType to) const {
    const DecisionTree& tree = state_.trees[static_cast<std::size_t>(h)];
    const Matrix& phi = phi_[static_cast<std::size_t>(h)];
    const Node& n = tree.node(node_id);
    const auto probs = decision_probs();
    Proposal prop;
    prop.node = node_id;
    prop.tree = tree;
    prop.tree.node(node_id).decision = to;
    prop.valid = true;
    if (to == n.decision) {
      prop.phi = phi;
      prop.log_ratio = 0.0;
      return prop;
    }
    const Eigen::Index pos = detail::leaf_position(tree, n.left);
    const Matrix parent = detail::collapse_basis(phi, pos);
    prop.phi = detail::expand_basis(parent, pos, detail::gate_vector(n.split->train_gap, to, softness(h)));
    const double p_new = probs[static_cast<std::size_t>(to.level)];
    const double p_old = probs[static_cast<std::size_t>(n.decision.level)];
    if (!(p_new > 0.0)) {
      prop.log_ratio = kNegInf;
      return prop;
    }
    prop.log_ratio = std::log(p_new) - std::log(p_old) + log_integrated(r, prop.phi) - log_integrated(r, phi);
    return prop;
  }

  Proposal propose_grow(int h, const Vector& r, Rng& rng) const {
    const auto ls = state_.trees[static_cast<std::size_t>(h)].leaves();
    const int leaf = ls[uniform_index(rng, ls.size())];
    auto draw = sample_rule(*state_.trees[static_cast<std::size_t>(h)].node(leaf).knots, ctx_, rng);
    if (!draw) return {};
    return grow_proposal(h, r, leaf, std::move(*draw));
  }

  Proposal propose_prune(int h, const Vector& r, Rng& rng) const {
    const auto nogs = state_.trees[static_cast<std::size_t>(h)].prunable_nodes();
    if (nogs.empty()) return {};
    return prune_proposal(h, r, nogs[uniform_index(rng, nogs.size())]);
  }

  Proposal propose_change(int h, const Vector& r, Rng& rng) const {
    if (cfg_.hard_only) return {};
    const auto nogs = state_.trees[static_cast<std::size_t>(h)].prunable_nodes();
    if (nogs.empty()) return {};
    const int node = nogs[uniform_index(rng, nogs.size())];
    const DecisionType to{static_cast<int>(uniform_index(rng, static_cast<std::size_t>(levels() + 1)))};
    return change_proposal(h, r, node, to);
  }

  // Tree h: (S2) softness MH, structure MH, decision of a grown node, leaf
  // weights.
  void update_tree(int h, Rng& rng) {
    const std::size_t hi = static_cast<std::size_t>(h);
    const Vector r = residual(h);
    if (cfg_.variant == Variant::S2 && !cfg_.hard_only) update_alpha(h, r, rng);

    const double u = uniform01(rng) * (cfg_.hyper.p_grow + cfg_.hyper.p_prune + cfg_.hyper.p_change);
    if (u < cfg_.hyper.p_grow) {
      ++stats_.grow_proposed;
      Proposal p = propose_grow(h, r, rng);
      if (p.valid && mh_accept(p.log_ratio, rng)) {
        ++stats_.grow_accepted;
        p.tree.node(p.node).decision = sample_decision(p.level_log_weight, rng);
        state_.trees[hi] = std::move(p.tree);
        phi_[hi] = training_basis(state_.trees[hi], softness(h), data_->size());
      }
    } else if (u < cfg_.hyper.p_grow + cfg_.hyper.p_prune) {
      ++stats_.prune_proposed;
      Proposal p = propose_prune(h, r, rng);
      if (p.valid && mh_accept(p.log_ratio, rng)) {
        ++stats_.prune_accepted;
        state_.trees[hi] = std::move(p.tree);
        phi_[hi] = std::move(p.phi);
      }
    } else {
      ++stats_.change_proposed;
      Proposal p = propose_change(h, r, rng);
      if (p.valid && mh_accept(p.log_ratio, rng)) {
        ++stats_.change_accepted;
        state_.trees[hi] = std::move(p.tree);
        phi_[hi] = std::move(p.phi);
      }
    }

    const Vector mu = sample_leaf_weights(LeafStats::from(r, phi_[hi]), state_.sigma2, state_.sigma_mu2, rng);
    state_.trees[hi].set_leaf_weights(std::span<const double>(mu.data(), static_cast<std::size_t>(mu.size())));
    Vector new_fit = phi_[hi] * mu;
    total_ += new_fit - fit_[hi];
    fit_[hi] = std::move(new_fit);
  }

  void update_alpha(int h, const Vector& r, Rng& rng) {
    const std::size_t hi = static_cast<std::size_t>(h);
    const DecisionTree& tree = state_.trees[hi];
    bool any_soft = false;
    for (int id : tree.internal_nodes()) any_soft = any_soft || !tree.node(id).decision.is_hard();
    const auto mu_std = tree.leaf_weights();
    const Vector mu = Eigen::Map<const Vector>(mu_std.data(), static_cast<Eigen::Index>(mu_std.size()));
    const double current = state_.alpha[hi];
    const double cur_ll = conditional_likelihood(r, phi_[hi], mu, state_.sigma2);
    Matrix cand_phi;
    double cand_value = current;
    auto log_lik = [&](double a) {
      if (!any_soft || a == current) return cur_ll;
      cand_value = a;
      cand_phi = training_basis(tree, softness_for(h, a), data_->size());
      return conditional_likelihood(r, cand_phi, mu, state_.sigma2);
    };
    ++stats_.alpha_proposed;
    const auto [next, accepted] = sample_alpha_h(current, cfg_.hyper.alpha_g, cfg_.hyper.beta_g,
                                                 cfg_.hyper.alpha_proposal_shape, log_lik, rng);
    if (!accepted) return;
    ++stats_.alpha_accepted;
    state_.alpha[hi] = next;
    if (any_soft) {
      phi_[hi] = (cand_value == next) ? std::move(cand_phi) : training_basis(tree, softness(h), data_->size());
      Vector new_fit = phi_[hi] * mu;
      total_ += new_fit - fit_[hi];
      fit_[hi] = std::move(new_fit);
    }
  }

  void update_globals(Rng& rng) {
    const Hyperparams& hp = cfg_.hyper;
    if (!cfg_.fix_sigma2) {
      const double rss = (data_->y - total_).squaredNorm();
      state_.sigma2 = sample_inv_gamma(sigma2_conditional(rss, data_->size(), hp.v, hp.lambda), rng);
    }
    if (!cfg_.fix_sigma_mu2) {
      double ss = 0.0;
      long leaves = 0;
      for (const auto& t : state_.trees)
        for (double m : t.leaf_weights()) {
          ss += m * m;
          ++leaves;
        }
      state_.sigma_mu2 = sample_inv_gamma(sigma_mu2_conditional(ss, leaves, hp.alpha_mu, hp.beta_mu), rng);
    }
    if (!cfg_.fix_p_a && !cfg_.hard_only) {
      const auto counts = decision_counts();
      if (cfg_.variant == Variant::Sk)
        state_.p_a = sample_p_a_dirichlet(counts, psi_, rng);
      else
        state_.p_a = {sample_p_a_beta(counts[0], counts[1], hp.s_a, hp.s_b, rng)};
    }
  }

  // Internal-node counts per decision level (S2: {hard, soft}).
  std::vector<long> decision_counts() const {
    std::vector<long> c(static_cast<std::size_t>(levels() + 1), 0);
    for (const auto& t : state_.trees)
      for (int id : t.internal_nodes()) ++c[static_cast<std::size_t>(t.node(id).decision.level)];
    return c;
  }

  void sweep(Rng& rng) {
    for (int h = 0; h < static_cast<int>(state_.trees.size()); ++h) update_tree(h, rng);
    // drop accumulated round-off
    total_.setZero();
    for (const auto& f : fit_) total_ += f;
    update_globals(rng);
  }

  double log_structure_ratio(int depth, double p_rule) const {
    const double ps = prior_.p_split(depth);
    const double pc = prior_.p_split(depth + 1);
    return std::log(ps) + 2.0 * std::log1p(-pc) + std::log(p_rule) - std::log1p(-ps);
  }

 private:
  void init_state() {
    const Hyperparams& hp = cfg_.hyper;
    state_.trees.assign(static_cast<std::size_t>(hp.m), DecisionTree(root_knots_));
    state_.sigma2 = cfg_.init_sigma2;
    state_.sigma_mu2 = cfg_.init_sigma_mu2 > 0.0 ? cfg_.init_sigma_mu2
                                                 : (hp.alpha_mu > 1.0 ? hp.beta_mu / (hp.alpha_mu - 1.0) : hp.beta_mu);
    if (!cfg_.init_p_a.empty()) {
      state_.p_a = cfg_.init_p_a;
    } else if (cfg_.variant == Variant::Sk) {
      double s = 0.0;
      for (double p : psi_) s += p;
      for (double p : psi_) state_.p_a.push_back(p / s);
    } else {
      state_.p_a = {hp.s_a / (hp.s_a + hp.s_b)};
    }
    if (cfg_.hard_only) state_.p_a = cfg_.variant == Variant::Sk ? decision_probs() : std::vector<double>{1.0};
    const double a0 = cfg_.init_alpha > 0.0 ? cfg_.init_alpha : hp.alpha_g / hp.beta_g;
    state_.alpha.assign(static_cast<std::size_t>(hp.m), a0);
    phi_.assign(static_cast<std::size_t>(hp.m), Matrix::Ones(data_->size(), 1));
    fit_.assign(static_cast<std::size_t>(hp.m), Vector::Zero(data_->size()));
    total_ = Vector::Zero(data_->size());
  }

  void refresh_tree(int h) {
    const std::size_t hi = static_cast<std::size_t>(h);
    phi_[hi] = training_basis(state_.trees[hi], softness(h), data_->size());
    const auto mu = state_.trees[hi].leaf_weights();
    Vector f = phi_[hi] * Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    total_ += f - fit_[hi];
    fit_[hi] = std::move(f);
  }

  const TrainingData* data_;
  const KnotSystem* knots_;
  const CutoffGrid* grid_;
  SamplerConfig cfg_;
  SplitContext ctx_;
  TreePrior prior_;
  std::shared_ptr<const SubtreeHandle> root_knots_;
  std::vector<double> psi_;
  PosteriorState state_;
  MoveStats stats_;
  std::vector<Matrix> phi_;
  std::vector<Vector> fit_;
  Vector total_;
};

struct ChainResult {
  std::vector<PosteriorState> snapshots;
  MoveStats stats;
};

// Snapshots after iterations t > burn_in with (t - burn_in) % thin == 0.
inline ChainResult run_chain(const TrainingData& data, const KnotSystem& knots, const CutoffGrid& grid,
                             const SamplerConfig& config, int n_iter, int burn_in, int thin, std::uint64_t seed) {
  if (n_iter <= burn_in) throw ValidationError("n_iter must exceed burn_in");
  if (burn_in < 0 || thin < 1) throw ValidationError("burn_in >= 0 and thin >= 1 required");
  Rng rng(seed);
  Sampler sampler(data, knots, grid, config);
  ChainResult out;
  out.snapshots.reserve(static_cast<std::size_t>((n_iter - burn_in) / thin));
  for (int t = 1; t <= n_iter; ++t) {
    sampler.sweep(rng);
    if (t > burn_in && (t - burn_in) % thin == 0) out.snapshots.push_back(sampler.state());
  }
  out.stats = sampler.stats();
  return out;
}

}  // namespace sbamdt
