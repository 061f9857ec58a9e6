#pragma once

// Public facade: fit a hard-soft additive decision-tree model, predict with
// posterior draws, feature importance.

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <unordered_map>

#include "sbamdt/core.hpp"
#include "sbamdt/sampler.hpp"

namespace sbamdt {

struct Dataset {
  Matrix s;  // n x d_M structured features
  Matrix x;  // n x p unstructured features
  Vector y;
  Eigen::Index size() const { return s.rows(); }
};

enum class Ablation { Full, HardOnly, NoMultivariate };

struct FitConfig {
  Variant variant = Variant::Sk;
  Hyperparams hyper;
  int n_iter = 2000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  int n_chains = 1;
  Ablation ablation = Ablation::Full;
  int max_threads = 0;  // 0: SBAMDT_THREADS or hardware concurrency

  void validate() const {
    hyper.validate();
    if (n_iter <= burn_in) throw ValidationError("n_iter must exceed burn_in");
    if (burn_in < 0) throw ValidationError("burn_in must be >= 0");
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (n_chains < 1) throw ValidationError("n_chains must be >= 1");
  }
};

// Affine map of Y onto [-0.5, 0.5].
struct ResponseScaling {
  double y_min = 0.0;
  double y_max = 1.0;
  double range() const { return y_max - y_min; }
  double to_model(double y) const { return (y - y_min) / range() - 0.5; }
  double to_original(double f) const { return (f + 0.5) * range() + y_min; }
};

struct FittedModel {
  FitConfig config;
  Hyperparams resolved;  // with beta_mu, lambda, p_m filled in
  KnotSystem knots;
  CutoffGrid grid;
  ResponseScaling scaling;
  std::vector<PosteriorState> snapshots;  // chains concatenated
  MoveStats stats;
  int n_structured = 0;
  int n_unstructured = 0;

  Softness softness(const PosteriorState& st, int h) const {
    Softness s;
    if (config.variant == Variant::Sk) {
      for (double a : resolved.alpha_levels) s.alphas.push_back(a * resolved.q);
    } else {
      s.alphas.push_back(resolved.q * st.alpha[static_cast<std::size_t>(h)]);
    }
    return s;
  }
};

struct PredictiveDraws {
  Matrix f;  // points x draws, original scale
  Matrix y;  // f plus N(0, sigma2) noise, original scale

  Vector mean() const { return f.rowwise().mean(); }
};

inline int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SBAMDT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Unstructured design matrix seen by the trees. The axis-aligned ablation
// offers the raw structured coordinates as extra univariate features.
inline Matrix design_x(Ablation ablation, const Matrix& s_raw, const Matrix& x) {
  if (ablation != Ablation::NoMultivariate) return x;
  Matrix out(x.rows(), x.cols() + s_raw.cols());
  out << x, s_raw;
  return out;
}

inline double sample_variance(const Vector& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / std::max<double>(1.0, static_cast<double>(v.size() - 1));
}

// Uniform sample of `t` of `n` rows without replacement, sorted.
inline std::vector<int> choose_knots(Eigen::Index n, int t, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < t; ++i) std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i) + uniform_index(rng, idx.size() - static_cast<std::size_t>(i))]);
  idx.resize(static_cast<std::size_t>(t));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct FitSetup {
  Hyperparams resolved;
  ResponseScaling scaling;
  KnotSystem knots;
  CutoffGrid grid;
  TrainingData train;
  SamplerConfig sampler;
};

inline FitSetup prepare_fit(const Dataset& data, const FitConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("dataset is empty");
  if (data.s.cols() < 1) throw ValidationError("at least one structured feature is required");
  if (data.x.rows() != data.size() || data.y.size() != data.size())
    throw ValidationError("dataset columns have different lengths");
  FitSetup st;
  st.scaling.y_min = data.y.minCoeff();
  st.scaling.y_max = data.y.maxCoeff();
  if (!(st.scaling.range() > 0.0)) throw ValidationError("response is constant; leaf prior scale undefined");
  st.train.y = data.y.unaryExpr([&](double v) { return st.scaling.to_model(v); });
  const double var_y = sample_variance(st.train.y);

  Hyperparams hp = cfg.hyper;
  if (hp.beta_mu <= 0.0) hp.beta_mu = 0.5 * var_y / hp.m;
  if (hp.lambda <= 0.0) hp.lambda = calibrate_lambda(var_y, hp.v);
  if (hp.p_m < 0.0) hp.p_m = multivariate_split_prob(static_cast<int>(data.s.cols()), static_cast<int>(data.x.cols()));
  if (cfg.ablation == Ablation::NoMultivariate) hp.p_m = 0.0;
  const Matrix x = design_x(cfg.ablation, data.s, data.x);
  if (hp.p_m == 0.0 && x.cols() == 0) throw ValidationError("no usable split features");
  st.resolved = hp;

  Rng knot_rng(cfg.seed);
  const int t = static_cast<int>(std::min<Eigen::Index>(hp.n_knots, data.size()));
  st.knots = build_knot_system(data.s, x, choose_knots(data.size(), t, knot_rng), hp.embed_dim);
  st.grid = CutoffGrid::build(x, hp.n_cutoffs);
  st.train.s_std = st.knots.standardize(data.s);
  st.train.x = x;

  st.sampler.variant = cfg.variant;
  st.sampler.hyper = hp;
  st.sampler.hard_only = cfg.ablation == Ablation::HardOnly;
  st.sampler.init_sigma2 = var_y;
  return st;
}

// Runs n_chains chains (chain i, 1-based, seeded with seed ^ i * 0x9E3779B97F4A7C15)
// and concatenates their post-burn-in snapshots in chain order.
inline FittedModel fit(const Dataset& data, const FitConfig& cfg) {
  FitSetup st = prepare_fit(data, cfg);
  std::vector<ChainResult> chains(static_cast<std::size_t>(cfg.n_chains));
  const int workers = std::min(thread_budget(cfg.max_threads), cfg.n_chains);
  auto run = [&](int c) {
    chains[static_cast<std::size_t>(c)] = run_chain(st.train, st.knots, st.grid, st.sampler, cfg.n_iter, cfg.burn_in,
                                                    cfg.thin, chain_seed(cfg.seed, static_cast<std::uint64_t>(c) + 1));
  };
  if (workers <= 1) {
    for (int c = 0; c < cfg.n_chains; ++c) run(c);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));
    for (int first = 0; first < cfg.n_chains; first += workers) {
      std::vector<std::thread> pool;
      for (int c = first; c < std::min(cfg.n_chains, first + workers); ++c)
        pool.emplace_back([&, c] {
          try {
            run(c);
          } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
          }
        });
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  FittedModel model;
  model.config = cfg;
  model.resolved = st.resolved;
  model.knots = std::move(st.knots);
  model.grid = std::move(st.grid);
  model.scaling = st.scaling;
  model.n_structured = static_cast<int>(data.s.cols());
  model.n_unstructured = static_cast<int>(data.x.cols());
  for (auto& c : chains) {
    model.stats += c.stats;
    for (auto& s : c.snapshots) model.snapshots.push_back(std::move(s));
  }
  return model;
}

// f on the rescaled model scale for every snapshot (points x snapshots).
inline Matrix predict_latent(const FittedModel& model, const Matrix& s_raw, const Matrix& x) {
  if (s_raw.cols() != model.n_structured || x.cols() != model.n_unstructured)
    throw ValidationError("feature dimensions do not match the fitted model");
  if (s_raw.rows() != x.rows()) throw ValidationError("structured and unstructured rows differ");
  const Matrix s_std = model.knots.standardize(s_raw);
  const Matrix xd = design_x(model.config.ablation, s_raw, x);
  const Eigen::Index n = s_raw.rows();
  Matrix f = Matrix::Zero(n, static_cast<Eigen::Index>(model.snapshots.size()));
  std::unordered_map<const SplitData*, Vector> gap_cache;
  for (std::size_t k = 0; k < model.snapshots.size(); ++k) {
    const auto& snap = model.snapshots[k];
    for (int h = 0; h < static_cast<int>(snap.trees.size()); ++h) {
      const auto& tree = snap.trees[static_cast<std::size_t>(h)];
      const Matrix phi = basis_from_gaps(tree, model.softness(snap, h), n, [&](int id) -> const Vector& {
        const SplitData* key = tree.node(id).split.get();
        auto it = gap_cache.find(key);
        if (it == gap_cache.end())
          it = gap_cache.emplace(key, split_gaps(key->rule, key->c_eta, model.knots, s_std, xd)).first;
        return it->second;
      });
      const auto mu = tree.leaf_weights();
      f.col(static_cast<Eigen::Index>(k)) += phi * Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    }
  }
  return f;
}

inline std::uint64_t prediction_seed(const FittedModel& model) { return chain_seed(model.config.seed, 0xD1CEULL); }

inline PredictiveDraws predict(const FittedModel& model, const Matrix& s_raw, const Matrix& x) {
  if (model.snapshots.empty()) throw ValidationError("model has no posterior snapshots");
  const Matrix latent = predict_latent(model, s_raw, x);
  PredictiveDraws out;
  const double range = model.scaling.range();
  out.f = latent.unaryExpr([&](double v) { return model.scaling.to_original(v); });
  out.y = out.f;
  Rng rng(prediction_seed(model));
  for (Eigen::Index k = 0; k < out.y.cols(); ++k) {
    const double sd = std::sqrt(model.snapshots[static_cast<std::size_t>(k)].sigma2) * range;
    for (Eigen::Index i = 0; i < out.y.rows(); ++i) out.y(i, k) += sd * draw_normal(rng);
  }
  return out;
}

// Posterior mean split counts: entry 0 is the structured block (including
// axis-aligned splits on structured coordinates), entry j + 1 the
// unstructured feature j.
inline std::vector<double> feature_importance(const FittedModel& model) {
  std::vector<double> counts(static_cast<std::size_t>(model.n_unstructured + 1), 0.0);
  if (model.snapshots.empty()) return counts;
  for (const auto& snap : model.snapshots)
    for (const auto& tree : snap.trees)
      for (int id : tree.internal_nodes()) {
        const auto& rule = tree.node(id).split->rule;
        const bool structured = rule.is_multivariate() || rule.feature >= model.n_unstructured;
        counts[structured ? 0 : static_cast<std::size_t>(rule.feature) + 1] += 1.0;
      }
  for (double& c : counts) c /= static_cast<double>(model.snapshots.size());
  return counts;
}

}  // namespace sbamdt
