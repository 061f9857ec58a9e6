#pragma once

// Synthetic benchmarks: a 45-degree rotated U-shaped domain cut by a circle
// into three clusters, and a piecewise function on a square.

#include <numbers>
#include <utility>

#include <Eigen/Cholesky>

#include "sbamdt/core.hpp"
#include "sbamdt/model.hpp"

namespace sbamdt {

enum class Scenario { UShape, Square };

struct SyntheticSpec {
  Scenario scenario = Scenario::UShape;
  int n_train = 500;
  int n_test = 200;
  double noise_sd = 0.1;
  int n_unstructured = 10;
  std::uint64_t seed = 1;
  double gp_length_scale = 0.5;
  double gp_variance = 1.0;

  void validate() const {
    if (n_train < 1 || n_test < 1) throw ValidationError("dataset sizes must be positive");
    if (noise_sd < 0.0) throw ValidationError("noise sd must be >= 0");
    if (scenario == Scenario::UShape && n_unstructured < 1)
      throw ValidationError("U-shape needs at least one unstructured feature");
  }
};

struct LabeledDataset {
  Dataset data;
  Vector f_true;
};

namespace ushape {

// Unrotated U: [-1, 1] x [-1, 0.8] minus the open notch (-1/3, 1/3) x (-1, 0).
inline constexpr double kTop = 0.8;
inline constexpr double kNotch = 1.0 / 3.0;
inline constexpr double kRadius = 0.9;

inline bool contains_unrotated(double u, double v) {
  if (u < -1.0 || u > 1.0 || v < -1.0 || v > kTop) return false;
  return !(u > -kNotch && u < kNotch && v > -1.0 && v < 0.0);
}

inline double area() { return 2.0 * (1.0 + kTop) - (2.0 * kNotch) * 1.0; }

inline Eigen::Vector2d rotate(const Eigen::Vector2d& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

inline constexpr double kAngle = std::numbers::pi / 4.0;

inline Eigen::Vector2d to_unrotated(const Eigen::Vector2d& s) { return rotate(s, -kAngle); }

}  // namespace ushape

// n points uniform over the rotated U-shape (rows of an n x 2 matrix).
inline Matrix sample_ushape(int n, Rng& rng) {
  if (n < 1) throw ValidationError("n must be >= 1");
  Matrix pts(n, 2);
  std::uniform_real_distribution<double> du(-1.0, 1.0), dv(-1.0, ushape::kTop);
  for (int i = 0; i < n;) {
    const double u = du(rng), v = dv(rng);
    if (!ushape::contains_unrotated(u, v)) continue;
    pts.row(i++) = ushape::rotate({u, v}, ushape::kAngle).transpose();
  }
  return pts;
}

inline Matrix sample_ushape(int n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_ushape(n, rng);
}

enum class Cluster { Inside = 0, Arm1 = 1, Arm2 = 2 };

// Inside iff |s| < 0.9; the outside splits into the arm left of the notch
// (Arm1) and the arm right of it (Arm2) in the unrotated frame.
inline Cluster circle_cluster(const Eigen::Vector2d& s) {
  if (s.norm() < ushape::kRadius) return Cluster::Inside;
  return ushape::to_unrotated(s).x() < 0.0 ? Cluster::Arm1 : Cluster::Arm2;
}

inline double ushape_truth(const Eigen::Vector2d& s, double x1) {
  switch (circle_cluster(s)) {
    case Cluster::Inside: return std::sin(3.0 * s.x()) * x1;
    case Cluster::Arm1: return 2.0 + std::cos(3.0 * s.y()) * x1;
    case Cluster::Arm2: return -2.0 + s.x() * s.y();
  }
  return 0.0;
}

inline double square_truth(double x1, double x2) {
  if (x1 >= 0.0 && x2 <= 0.0) return std::sin(7.0 * x1) * std::cos(4.0 * x2);
  if (x1 >= 0.0) return 1.0 + (2.0 / 7.0) * std::pow(2.0 * x1 + 1.0, 2) + std::pow(2.0 * x2 + 1.0, 2);
  if (x2 <= 0.2) return 5.0;
  return -5.0;
}

inline Matrix squared_exponential_kernel(const Matrix& pts, double length_scale, double variance) {
  const Eigen::Index n = pts.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = variance * std::exp(-(pts.row(i) - pts.row(j)).squaredNorm() / (2.0 * length_scale * length_scale));
      k(i, j) = k(j, i) = v;
    }
  return k;
}

// One zero-mean GP draw at `pts` with a squared-exponential kernel.
inline Vector gp_feature(const Matrix& pts, double length_scale, double variance, Rng& rng, double jitter = 1e-8) {
  const Eigen::Index n = pts.rows();
  if (variance == 0.0) return Vector::Zero(n);
  if (variance < 0.0 || length_scale <= 0.0) throw ValidationError("GP variance >= 0 and length scale > 0 required");
  Matrix k = squared_exponential_kernel(pts, length_scale, variance);
  k.diagonal().array() += jitter * variance;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("GP kernel factorization failed after jitter");
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = draw_normal(rng);
  return llt.matrixL() * z;
}

namespace detail {

inline LabeledDataset take_rows(const Matrix& s, const Matrix& x, const Vector& f, const Vector& y, Eigen::Index first,
                                Eigen::Index count) {
  LabeledDataset d;
  d.data.s = s.middleRows(first, count);
  d.data.x = x.middleRows(first, count);
  d.data.y = y.segment(first, count);
  d.f_true = f.segment(first, count);
  return d;
}

}  // namespace detail

// Train and test sets drawn jointly from one seed; GP features are drawn over
// the union of train and test locations.
inline std::pair<LabeledDataset, LabeledDataset> assemble(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int n = spec.n_train + spec.n_test;
  Matrix s, x;
  Vector f(n);
  if (spec.scenario == Scenario::UShape) {
    s = sample_ushape(n, rng);
    x.resize(n, spec.n_unstructured);
    for (int j = 0; j < spec.n_unstructured; ++j) x.col(j) = gp_feature(s, spec.gp_length_scale, spec.gp_variance, rng);
    for (int i = 0; i < n; ++i) f(i) = ushape_truth(s.row(i).transpose(), x(i, 0));
  } else {
    s.resize(n, 2);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < n; ++i) {
      s(i, 0) = unif(rng);
      s(i, 1) = unif(rng);
      f(i) = square_truth(s(i, 0), s(i, 1));
    }
    x = s;  // each coordinate is also offered as a univariate feature
  }
  Vector y = f;
  for (int i = 0; i < n; ++i) y(i) += spec.noise_sd * draw_normal(rng);
  return {detail::take_rows(s, x, f, y, 0, spec.n_train), detail::take_rows(s, x, f, y, spec.n_train, spec.n_test)};
}

}  // namespace sbamdt
