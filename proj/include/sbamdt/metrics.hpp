#pragma once

#include <algorithm>
#include <vector>

#include "sbamdt/core.hpp"

namespace sbamdt {

struct MetricReport {
  double rmspe = 0.0;
  double mape = 0.0;  // mean absolute prediction error
  double crps = 0.0;
  std::vector<double> crps_per_point;
};

inline void require_same_length(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ValidationError("prediction and truth lengths differ");
  if (a.size() == 0) throw ValidationError("metrics need at least one point");
}

inline double rmspe(const Vector& predicted, const Vector& truth) {
  require_same_length(predicted, truth);
  return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(truth.size()));
}

inline double mape(const Vector& predicted, const Vector& truth) {
  require_same_length(predicted, truth);
  return (predicted - truth).cwiseAbs().mean();
}

// mean|X - y| - 0.5 mean|X - X'| over all N^2 ordered draw pairs; this is the
// CRPS of the empirical predictive distribution.
inline double crps_empirical(std::vector<double> draws, double observed) {
  const std::size_t n = draws.size();
  if (n < 2) throw ValidationError("CRPS needs at least 2 draws");
  double abs_err = 0.0;
  for (double d : draws) abs_err += std::abs(d - observed);
  std::sort(draws.begin(), draws.end());
  // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i)
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    pair_sum += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * draws[i];
  pair_sum *= 2.0;
  const double nn = static_cast<double>(n);
  return std::max(0.0, abs_err / nn - 0.5 * pair_sum / (nn * nn));
}

// `draws` is points x draws.
inline std::vector<double> crps_empirical(const Matrix& draws, const Vector& observed) {
  if (draws.rows() != observed.size()) throw ValidationError("draw rows and observations differ");
  std::vector<double> out(static_cast<std::size_t>(observed.size()));
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    std::vector<double> d(static_cast<std::size_t>(draws.cols()));
    for (Eigen::Index k = 0; k < draws.cols(); ++k) d[static_cast<std::size_t>(k)] = draws(i, k);
    out[static_cast<std::size_t>(i)] = crps_empirical(std::move(d), observed(i));
  }
  return out;
}

inline MetricReport evaluate(const Matrix& draws, const Vector& truth) {
  MetricReport r;
  const Vector mean = draws.rowwise().mean();
  r.rmspe = rmspe(mean, truth);
  r.mape = mape(mean, truth);
  r.crps_per_point = crps_empirical(draws, truth);
  double s = 0.0;
  for (double c : r.crps_per_point) s += c;
  r.crps = s / static_cast<double>(r.crps_per_point.size());
  return r;
}

}  // namespace sbamdt
