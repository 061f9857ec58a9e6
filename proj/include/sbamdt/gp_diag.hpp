#pragma once

// Gaussian-process moments of the sum-of-trees function: prior covariance
// given (T, A) and given T alone, posterior moments of f, and Monte Carlo
// counterparts.

#include <Eigen/Eigenvalues>

#include "sbamdt/core.hpp"
#include "sbamdt/decision_tree.hpp"
#include "sbamdt/likelihood.hpp"
#include "sbamdt/sampler.hpp"

namespace sbamdt {

struct CovarianceReport {
  Matrix analytic;
  Matrix monte_carlo;
  Matrix mc_se;  // per-entry Monte Carlo standard error
  double max_abs_dev = 0.0;
  double max_z = 0.0;  // max |analytic - mc| / se over entries with se > 0
  bool psd = false;
};

struct GpMoments {
  Vector mean;
  Matrix cov;
};

// Symmetric, and min eigenvalue >= -tol * trace.
inline bool is_psd(const Matrix& c, double tol = 1e-8) {
  if (c.rows() != c.cols()) return false;
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff())) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * std::max(c.trace(), 0.0);
}

inline double leaf_prior_variance(double alpha_mu, double beta_mu) {
  if (!(alpha_mu > 1.0)) throw ValidationError("alpha_mu must exceed 1 for a finite prior variance");
  return beta_mu / (alpha_mu - 1.0);
}

// beta_mu / (alpha_mu - 1) * sum_h Phi_h Phi_h^T, with Phi_h points x leaves.
inline Matrix prior_cov_given_TA(const std::vector<Matrix>& phis, double alpha_mu, double beta_mu) {
  const double scale = leaf_prior_variance(alpha_mu, beta_mu);
  if (phis.empty()) throw ValidationError("need at least one tree basis");
  Matrix c = Matrix::Zero(phis.front().rows(), phis.front().rows());
  for (const auto& phi : phis) c.noalias() += phi * phi.transpose();
  return scale * c;
}

// E[Phi_l(d_i) Phi_l(d_j)] over independent node decisions A ~ probs, summed
// over the leaves of one tree: prod_eta sum_v P_eta(d_i; v) P_eta(d_j; v) p_v.
inline Matrix expected_leaf_products(const DecisionTree& tree, const Softness& softness,
                                     const std::vector<double>& probs, const std::vector<Vector>& gaps,
                                     Eigen::Index n) {
  Matrix out = Matrix::Zero(n, n);
  for (int leaf : tree.leaves()) {
    Matrix prod = Matrix::Ones(n, n);
    for (int child = leaf; tree.node(child).parent >= 0; child = tree.node(child).parent) {
      const int pid = tree.node(child).parent;
      const Node& par = tree.node(pid);
      const bool left = par.left == child;
      const Vector& gap = gaps[static_cast<std::size_t>(pid)];
      Matrix term = Matrix::Zero(n, n);
      for (std::size_t v = 0; v < probs.size(); ++v) {
        if (probs[v] == 0.0) continue;
        Vector z = detail::gate_vector(gap, DecisionType{static_cast<int>(v)}, softness);
        if (!left) z = (1.0 - z.array()).matrix();
        term.noalias() += probs[v] * z * z.transpose();
      }
      prod = prod.cwiseProduct(term);
    }
    out += prod;
  }
  return out;
}

// Prior covariance of f given the tree topologies and rules, decisions
// integrated out by exact enumeration per node.
inline Matrix prior_cov_given_T(const std::vector<DecisionTree>& trees, const std::vector<Softness>& softness,
                                const std::vector<double>& probs, const KnotSystem& ks, const Matrix& s_std,
                                const Matrix& x, double alpha_mu, double beta_mu) {
  const double scale = leaf_prior_variance(alpha_mu, beta_mu);
  if (trees.size() != softness.size()) throw ValidationError("one softness table per tree required");
  const Eigen::Index n = s_std.rows();
  Matrix c = Matrix::Zero(n, n);
  for (std::size_t h = 0; h < trees.size(); ++h) {
    c += expected_leaf_products(trees[h], softness[h], probs, node_gaps(trees[h], ks, s_std, x), n);
  }
  return scale * c;
}

// Second-moment accumulator for zero-mean or centered covariance estimates.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Eigen::Index n) : sum_(Vector::Zero(n)), prod_(Matrix::Zero(n, n)), sq_(Matrix::Zero(n, n)) {}

  void add(const Vector& f) {
    const Matrix p = f * f.transpose();
    sum_ += f;
    prod_ += p;
    sq_ += p.cwiseProduct(p);
    ++count_;
  }

  long count() const { return count_; }
  Vector mean() const { return sum_ / static_cast<double>(count_); }

  // E[f f^T] estimate (mean known to be zero) and its standard errors.
  Matrix second_moment() const { return prod_ / static_cast<double>(count_); }
  Matrix second_moment_se() const {
    const double n = static_cast<double>(count_);
    const Matrix m = second_moment();
    const Matrix var = (sq_ / n - m.cwiseProduct(m)) * (n / (n - 1.0));
    return (var.cwiseMax(0.0) / n).cwiseSqrt();
  }

  Matrix covariance() const {
    const double n = static_cast<double>(count_);
    const Vector m = mean();
    return (prod_ - n * m * m.transpose()) / (n - 1.0);
  }

 private:
  Vector sum_;
  Matrix prod_;
  Matrix sq_;
  long count_ = 0;
};

inline CovarianceReport compare_covariances(Matrix analytic, Matrix mc, Matrix se) {
  CovarianceReport r;
  r.analytic = std::move(analytic);
  r.monte_carlo = std::move(mc);
  r.mc_se = std::move(se);
  const Matrix dev = (r.analytic - r.monte_carlo).cwiseAbs();
  r.max_abs_dev = dev.maxCoeff();
  for (Eigen::Index i = 0; i < dev.rows(); ++i)
    for (Eigen::Index j = 0; j < dev.cols(); ++j)
      if (r.mc_se(i, j) > 0.0) r.max_z = std::max(r.max_z, dev(i, j) / r.mc_se(i, j));
  r.psd = is_psd(r.analytic);
  return r;
}

// f = sum_h Phi_h M_h with sigma_mu2 ~ InvGamma(alpha_mu, beta_mu), M ~ N(0, sigma_mu2 I).
inline CovarianceReport mc_prior_cov_given_TA(const std::vector<Matrix>& phis, double alpha_mu, double beta_mu,
                                              long draws, Rng& rng) {
  const Matrix analytic = prior_cov_given_TA(phis, alpha_mu, beta_mu);
  CovarianceAccumulator acc(analytic.rows());
  for (long k = 0; k < draws; ++k) {
    const double sd = std::sqrt(draw_inv_gamma(rng, alpha_mu, beta_mu));
    Vector f = Vector::Zero(analytic.rows());
    for (const auto& phi : phis) {
      Vector m(phi.cols());
      for (Eigen::Index l = 0; l < m.size(); ++l) m(l) = sd * draw_normal(rng);
      f.noalias() += phi * m;
    }
    acc.add(f);
  }
  return compare_covariances(analytic, acc.second_moment(), acc.second_moment_se());
}

// As above with each node's decision also drawn from `probs`.
inline CovarianceReport mc_prior_cov_given_T(const std::vector<DecisionTree>& trees,
                                             const std::vector<Softness>& softness, const std::vector<double>& probs,
                                             const KnotSystem& ks, const Matrix& s_std, const Matrix& x,
                                             double alpha_mu, double beta_mu, long draws, Rng& rng) {
  const Matrix analytic = prior_cov_given_T(trees, softness, probs, ks, s_std, x, alpha_mu, beta_mu);
  std::vector<std::vector<Vector>> gaps;
  for (const auto& t : trees) gaps.push_back(node_gaps(t, ks, s_std, x));
  std::vector<DecisionTree> work = trees;
  CovarianceAccumulator acc(s_std.rows());
  for (long k = 0; k < draws; ++k) {
    const double sd = std::sqrt(draw_inv_gamma(rng, alpha_mu, beta_mu));
    Vector f = Vector::Zero(s_std.rows());
    for (std::size_t h = 0; h < work.size(); ++h) {
      for (int id : work[h].internal_nodes())
        work[h].node(id).decision = DecisionType{static_cast<int>(draw_categorical(rng, probs))};
      const Matrix phi = basis_from_gaps(work[h], softness[h], s_std.rows(), [&](int id) -> const Vector& {
        return gaps[h][static_cast<std::size_t>(id)];
      });
      Vector m(phi.cols());
      for (Eigen::Index l = 0; l < m.size(); ++l) m(l) = sd * draw_normal(rng);
      f.noalias() += phi * m;
    }
    acc.add(f);
  }
  return compare_covariances(analytic, acc.second_moment(), acc.second_moment_se());
}

// Inputs shared by the posterior moment computations: one snapshot, the
// training data it was fit to and the bases of every tree at training and
// evaluation points.
struct PosteriorGpInput {
  const PosteriorState* state = nullptr;
  std::vector<Matrix> train_phi;  // per tree, n_train x L_h
  std::vector<Matrix> point_phi;  // per tree, n_points x L_h
  const Vector* y = nullptr;      // training response (model scale)
};

inline Vector tree_weights(const DecisionTree& t) {
  const auto mu = t.leaf_weights();
  return Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
}

// Conditional on every other tree's leaf weights: f(points) has mean
// Phi_h mu-hat_h + sum_{j != h} Phi_j M_j and covariance Phi_h Omega_h Phi_h^T.
inline GpMoments posterior_gp_moments(const PosteriorGpInput& in, int h) {
  const auto& trees = in.state->trees;
  const std::size_t hi = static_cast<std::size_t>(h);
  Vector others_train = Vector::Zero(in.y->size());
  Vector others_pts = Vector::Zero(in.point_phi[hi].rows());
  for (std::size_t j = 0; j < trees.size(); ++j) {
    if (j == hi) continue;
    const Vector m = tree_weights(trees[j]);
    others_train += in.train_phi[j] * m;
    others_pts += in.point_phi[j] * m;
  }
  const Vector r = *in.y - others_train;
  const LeafPosterior post = leaf_posterior(r, in.train_phi[hi], in.state->sigma2, in.state->sigma_mu2);
  GpMoments out;
  out.mean = in.point_phi[hi] * post.mean + others_pts;
  out.cov = in.point_phi[hi] * post.cov * in.point_phi[hi].transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// All trees' leaf weights jointly uncertain given (T, A, sigma2, sigma_mu2):
// empirical moments of f over a leaf-weight-only Gibbs run (cross-tree
// covariance has no closed form here).
inline GpMoments posterior_gp_moments_all(const PosteriorGpInput& in, long draws, long burn_in, Rng& rng) {
  const auto& trees = in.state->trees;
  std::vector<Vector> mu;
  for (const auto& t : trees) mu.push_back(tree_weights(t));
  Vector total = Vector::Zero(in.y->size());
  for (std::size_t j = 0; j < trees.size(); ++j) total += in.train_phi[j] * mu[j];
  CovarianceAccumulator acc(in.point_phi.front().rows());
  for (long k = 0; k < draws + burn_in; ++k) {
    for (std::size_t j = 0; j < trees.size(); ++j) {
      const Vector r = *in.y - (total - in.train_phi[j] * mu[j]);
      const Vector next = sample_leaf_weights(LeafStats::from(r, in.train_phi[j]), in.state->sigma2,
                                              in.state->sigma_mu2, rng);
      total += in.train_phi[j] * (next - mu[j]);
      mu[j] = next;
    }
    if (k < burn_in) continue;
    Vector f = Vector::Zero(in.point_phi.front().rows());
    for (std::size_t j = 0; j < trees.size(); ++j) f += in.point_phi[j] * mu[j];
    acc.add(f);
  }
  return {acc.mean(), acc.covariance()};
}

}  // namespace sbamdt
