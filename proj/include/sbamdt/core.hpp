#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sbamdt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Invalid input or configuration (CLI exit code 1).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure during a computation on valid input (CLI exit code 2).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double draw_gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

// Inverse-Gamma(shape, scale): scale / Gamma(shape, 1).
inline double draw_inv_gamma(Rng& rng, double shape, double scale) {
  return scale / std::gamma_distribution<double>(shape, 1.0)(rng);
}

inline double draw_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t draw_categorical(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // round-off: last category with positive weight
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

// Chain i uses seed xor i * golden-ratio increment.
inline std::uint64_t chain_seed(std::uint64_t seed, std::uint64_t chain) {
  return seed ^ (chain * 0x9E3779B97F4A7C15ULL);
}

}  // namespace sbamdt
