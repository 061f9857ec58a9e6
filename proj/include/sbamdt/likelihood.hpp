#pragma once

#include <atomic>

#include <Eigen/Cholesky>

#include "sbamdt/core.hpp"

namespace sbamdt {

// Number of times a leaf precision matrix needed jitter to factorize.
inline std::atomic<long>& jitter_events() {
  static std::atomic<long> count{0};
  return count;
}

// Sufficient statistics of residuals R against a leaf basis Phi.
struct LeafStats {
  Matrix gram;   // Phi^T Phi
  Vector cross;  // Phi^T R
  double rr = 0.0;
  Eigen::Index n = 0;

  static LeafStats from(const Vector& r, const Matrix& phi) {
    LeafStats s;
    s.gram = phi.transpose() * phi;
    s.cross = phi.transpose() * r;
    s.rr = r.squaredNorm();
    s.n = r.size();
    return s;
  }
};

struct LeafPosterior {
  Vector mean;       // mu-hat
  Matrix cov;        // Omega
  Matrix precision;  // Omega^{-1}
};

namespace detail {

// Cholesky of Omega^{-1} = I / sigma_mu2 + gram / sigma2, with one jitter
// retry of 1e-10 * trace / L.
inline Eigen::LLT<Matrix> leaf_precision_llt(const Matrix& gram, double sigma2, double sigma_mu2,
                                             Matrix* precision_out = nullptr) {
  if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  if (!(sigma_mu2 > 0.0)) throw ValidationError("sigma_mu2 must be positive");
  const Eigen::Index L = gram.rows();
  Matrix prec = gram / sigma2;
  prec.diagonal().array() += 1.0 / sigma_mu2;
  Eigen::LLT<Matrix> llt(prec);
  if (llt.info() != Eigen::Success) {
    ++jitter_events();
    prec.diagonal().array() += 1e-10 * prec.trace() / static_cast<double>(L);
    llt.compute(prec);
    if (llt.info() != Eigen::Success) throw NumericalError("leaf precision matrix is numerically singular");
  }
  if (precision_out) *precision_out = prec;
  return llt;
}

}  // namespace detail

// sum_i log N(R_i | Phi_i . M, sigma2)
inline double conditional_likelihood(const Vector& r, const Matrix& phi, const Vector& mu, double sigma2) {
  if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  const double n = static_cast<double>(r.size());
  return -0.5 * n * (kLog2Pi + std::log(sigma2)) - (r - phi * mu).squaredNorm() / (2.0 * sigma2);
}

// log of the likelihood with M ~ N(0, sigma_mu2 I) integrated out.
inline double integrated_likelihood(const LeafStats& s, double sigma2, double sigma_mu2) {
  const auto llt = detail::leaf_precision_llt(s.gram, sigma2, sigma_mu2);
  const Vector b = s.cross / sigma2;
  const Vector w = llt.matrixL().solve(b);  // b^T P^{-1} b = |L^{-1} b|^2
  const double log_det_prec = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(s.n);
  const double L = static_cast<double>(s.gram.rows());
  return -0.5 * n * (kLog2Pi + std::log(sigma2)) - 0.5 * L * std::log(sigma_mu2) - 0.5 * log_det_prec -
         s.rr / (2.0 * sigma2) + 0.5 * w.squaredNorm();
}

inline double integrated_likelihood(const Vector& r, const Matrix& phi, double sigma2, double sigma_mu2) {
  return integrated_likelihood(LeafStats::from(r, phi), sigma2, sigma_mu2);
}

inline LeafPosterior leaf_posterior(const LeafStats& s, double sigma2, double sigma_mu2) {
  LeafPosterior post;
  const auto llt = detail::leaf_precision_llt(s.gram, sigma2, sigma_mu2, &post.precision);
  post.mean = llt.solve(s.cross / sigma2);
  post.cov = llt.solve(Matrix::Identity(s.gram.rows(), s.gram.rows()));
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  return post;
}

inline LeafPosterior leaf_posterior(const Vector& r, const Matrix& phi, double sigma2, double sigma_mu2) {
  return leaf_posterior(LeafStats::from(r, phi), sigma2, sigma_mu2);
}

// M ~ N(mu-hat, Omega) via the Cholesky factor of the precision.
inline Vector sample_leaf_weights(const LeafStats& s, double sigma2, double sigma_mu2, Rng& rng) {
  const auto llt = detail::leaf_precision_llt(s.gram, sigma2, sigma_mu2);
  const Vector mean = llt.solve(s.cross / sigma2);
  Vector z(s.gram.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = draw_normal(rng);
  // P = L L^T  =>  L^{-T} z ~ N(0, P^{-1})
  return mean + llt.matrixU().solve(z);
}

}  // namespace sbamdt
