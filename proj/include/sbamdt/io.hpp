#pragma once

// Text formats: dataset CSV, flat key = value config files, JSON tree and
// posterior snapshots, fitted-model directories.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sbamdt/model.hpp"
#include "sbamdt/synthdata.hpp"

namespace sbamdt {

using Json = nlohmann::json;

// 17 significant digits: lossless for doubles.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& text, const std::string& where) {
  std::size_t start = text.find_first_not_of(" \t\r");
  std::size_t end = text.find_last_not_of(" \t\r");
  if (start == std::string::npos) throw ValidationError(where + ": empty value");
  const std::string t = text.substr(start, end - start + 1);
  char* stop = nullptr;
  const double v = std::strtod(t.c_str(), &stop);
  if (stop != t.c_str() + t.size()) throw ValidationError(where + ": not a number: '" + t + "'");
  return v;
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline CsvTable read_csv(std::istream& in, const std::string& name = "csv") {
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      for (auto& f : fields) t.header.push_back(trim(f));
      continue;
    }
    const std::string where = name + ":" + std::to_string(line_no);
    if (fields.size() != t.header.size())
      throw ValidationError(where + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    std::vector<double> row;
    for (const auto& f : fields) row.push_back(parse_double(f, where));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ValidationError(name + ": missing header row");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_csv(in, path.string());
}

struct CsvDataset {
  Dataset data;
  std::optional<Vector> f_true;
};

// Columns s_1..s_d, x_1..x_p (contiguous numbering), y; optional f_true.
inline CsvDataset dataset_from_table(const CsvTable& t, bool require_y = true) {
  std::vector<int> s_cols, x_cols;
  for (int i = 1;; ++i) {
    const int c = t.column("s_" + std::to_string(i));
    if (c < 0) break;
    s_cols.push_back(c);
  }
  for (int i = 1;; ++i) {
    const int c = t.column("x_" + std::to_string(i));
    if (c < 0) break;
    x_cols.push_back(c);
  }
  if (s_cols.empty()) throw ValidationError("missing column 's_1'");
  const int y_col = t.column("y");
  if (require_y && y_col < 0) throw ValidationError("missing column 'y'");
  const int f_col = t.column("f_true");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  CsvDataset out;
  out.data.s.resize(n, static_cast<Eigen::Index>(s_cols.size()));
  out.data.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  out.data.y = Vector::Zero(n);
  if (f_col >= 0) out.f_true = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < s_cols.size(); ++j) out.data.s(i, static_cast<Eigen::Index>(j)) = r[static_cast<std::size_t>(s_cols[j])];
    for (std::size_t j = 0; j < x_cols.size(); ++j) out.data.x(i, static_cast<Eigen::Index>(j)) = r[static_cast<std::size_t>(x_cols[j])];
    if (y_col >= 0) out.data.y(i) = r[static_cast<std::size_t>(y_col)];
    if (f_col >= 0) (*out.f_true)(i) = r[static_cast<std::size_t>(f_col)];
  }
  return out;
}

inline CsvDataset read_dataset(const std::filesystem::path& path, bool require_y = true) {
  return dataset_from_table(read_csv(path), require_y);
}

inline void write_dataset(std::ostream& out, const Dataset& d, const Vector* f_true = nullptr) {
  for (Eigen::Index j = 0; j < d.s.cols(); ++j) out << "s_" << j + 1 << ',';
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << "x_" << j + 1 << ',';
  out << 'y';
  if (f_true) out << ",f_true";
  out << '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.s.cols(); ++j) out << format_double(d.s(i, j)) << ',';
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << format_double(d.x(i, j)) << ',';
    out << format_double(d.y(i));
    if (f_true) out << ',' << format_double((*f_true)(i));
    out << '\n';
  }
}

inline void write_dataset(const std::filesystem::path& path, const LabeledDataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write " + path.string());
  write_dataset(out, d.data, &d.f_true);
}

// ---------------------------------------------------------------- config

// Flat `key = value` lines; '#' or ';' start comments; [section] headers are
// ignored.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in, const std::string& name = "config") {
    ConfigMap c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty() || line.front() == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(name + ":" + std::to_string(line_no) + ": expected key = value");
      c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static ConfigMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    return parse(in, path.string());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) const {
    if (!has(key)) return used_.insert(key), fallback;
    return parse_double(get(key, std::string{}), key);
  }

  template <class Int>
    requires std::is_integral_v<Int>
  Int get_int(const std::string& key, Int fallback) const {
    if (!has(key)) return used_.insert(key), fallback;
    const std::string v = get(key, std::string{});
    Int out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": not an integer: '" + v + "'");
    return out;
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return used_.insert(key), fallback;
    std::vector<double> out;
    for (const auto& f : split_fields(get(key, std::string{}))) out.push_back(parse_double(f, key));
    return out;
  }

  // Keys present in the file but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline Variant parse_variant(const std::string& s) {
  if (s == "Sk" || s == "sk") return Variant::Sk;
  if (s == "S2" || s == "s2") return Variant::S2;
  throw ValidationError("variant must be Sk or S2, got '" + s + "'");
}

inline std::string to_string(Variant v) { return v == Variant::Sk ? "Sk" : "S2"; }

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full" || s == "Full") return Ablation::Full;
  if (s == "hard_only" || s == "HardOnly") return Ablation::HardOnly;
  if (s == "no_multivariate" || s == "NoMultivariate") return Ablation::NoMultivariate;
  throw ValidationError("ablation must be full, hard_only or no_multivariate, got '" + s + "'");
}

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::HardOnly: return "hard_only";
    case Ablation::NoMultivariate: return "no_multivariate";
  }
  return "full";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "ushape" || s == "UShape") return Scenario::UShape;
  if (s == "square" || s == "Square") return Scenario::Square;
  throw ValidationError("scenario must be ushape or square, got '" + s + "'");
}

inline Hyperparams hyperparams_from(const ConfigMap& c, Hyperparams h = {}) {
  h.m = c.get_int("m", h.m);
  h.gamma = c.get("gamma", h.gamma);
  h.delta = c.get("delta", h.delta);
  h.max_depth = c.get_int("max_depth", h.max_depth);
  h.p_m = c.get("p_m", h.p_m);
  h.alpha_levels = c.get_list("alpha_levels", h.alpha_levels);
  h.q = c.get("q", h.q);
  h.psi = c.get_list("psi", h.psi);
  h.s_a = c.get("s_a", h.s_a);
  h.s_b = c.get("s_b", h.s_b);
  h.alpha_g = c.get("alpha_g", h.alpha_g);
  h.beta_g = c.get("beta_g", h.beta_g);
  h.alpha_proposal_shape = c.get("alpha_proposal_shape", h.alpha_proposal_shape);
  h.alpha_mu = c.get("alpha_mu", h.alpha_mu);
  h.beta_mu = c.get("beta_mu", h.beta_mu);
  h.v = c.get("v", h.v);
  h.lambda = c.get("lambda", h.lambda);
  h.n_knots = c.get_int("n_knots", h.n_knots);
  h.embed_dim = c.get_int("embed_dim", h.embed_dim);
  h.n_cutoffs = c.get_int("n_cutoffs", h.n_cutoffs);
  h.p_grow = c.get("p_grow", h.p_grow);
  h.p_prune = c.get("p_prune", h.p_prune);
  h.p_change = c.get("p_change", h.p_change);
  return h;
}

inline FitConfig fit_config_from(const ConfigMap& c) {
  FitConfig f;
  f.variant = parse_variant(c.get("variant", std::string("Sk")));
  f.ablation = parse_ablation(c.get("ablation", std::string("full")));
  f.hyper = hyperparams_from(c);
  f.n_iter = c.get_int("n_iter", f.n_iter);
  f.burn_in = c.get_int("burn_in", f.burn_in);
  f.thin = c.get_int("thin", f.thin);
  f.n_chains = c.get_int("n_chains", f.n_chains);
  f.seed = c.get_int<std::uint64_t>("seed", f.seed);
  f.max_threads = c.get_int("threads", f.max_threads);
  return f;
}

inline SyntheticSpec synthetic_spec_from(const ConfigMap& c) {
  SyntheticSpec s;
  s.scenario = parse_scenario(c.get("scenario", std::string("ushape")));
  s.n_train = c.get_int("n_train", s.n_train);
  s.n_test = c.get_int("n_test", s.n_test);
  s.noise_sd = c.get("noise_sd", s.noise_sd);
  s.n_unstructured = c.get_int("n_unstructured", s.n_unstructured);
  s.seed = c.get_int<std::uint64_t>("seed", s.seed);
  s.gp_length_scale = c.get("gp_length_scale", s.gp_length_scale);
  s.gp_variance = c.get("gp_variance", s.gp_variance);
  return s;
}

// ---------------------------------------------------------------- JSON

inline Json hyperparams_to_json(const Hyperparams& h) {
  return Json{{"m", h.m},
              {"gamma", h.gamma},
              {"delta", h.delta},
              {"max_depth", h.max_depth},
              {"p_m", h.p_m},
              {"alpha_levels", h.alpha_levels},
              {"q", h.q},
              {"psi", h.psi},
              {"s_a", h.s_a},
              {"s_b", h.s_b},
              {"alpha_g", h.alpha_g},
              {"beta_g", h.beta_g},
              {"alpha_proposal_shape", h.alpha_proposal_shape},
              {"alpha_mu", h.alpha_mu},
              {"beta_mu", h.beta_mu},
              {"v", h.v},
              {"lambda", h.lambda},
              {"n_knots", h.n_knots},
              {"embed_dim", h.embed_dim},
              {"n_cutoffs", h.n_cutoffs},
              {"p_grow", h.p_grow},
              {"p_prune", h.p_prune},
              {"p_change", h.p_change}};
}

inline Hyperparams hyperparams_from_json(const Json& j) {
  Hyperparams h;
  h.m = j.at("m");
  h.gamma = j.at("gamma");
  h.delta = j.at("delta");
  h.max_depth = j.at("max_depth");
  h.p_m = j.at("p_m");
  h.alpha_levels = j.at("alpha_levels").get<std::vector<double>>();
  h.q = j.at("q");
  h.psi = j.at("psi").get<std::vector<double>>();
  h.s_a = j.at("s_a");
  h.s_b = j.at("s_b");
  h.alpha_g = j.at("alpha_g");
  h.beta_g = j.at("beta_g");
  h.alpha_proposal_shape = j.at("alpha_proposal_shape");
  h.alpha_mu = j.at("alpha_mu");
  h.beta_mu = j.at("beta_mu");
  h.v = j.at("v");
  h.lambda = j.at("lambda");
  h.n_knots = j.at("n_knots");
  h.embed_dim = j.at("embed_dim");
  h.n_cutoffs = j.at("n_cutoffs");
  h.p_grow = j.at("p_grow");
  h.p_prune = j.at("p_prune");
  h.p_change = j.at("p_change");
  return h;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix matrix_from_json(const Json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = data.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
  return m;
}

inline Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// nodes[] with {id, parent, is_leaf, rule, decision, c_eta, mu?}; rule and
// c_eta are null on leaves. Knot lists are written for multivariate rules
// only: univariate sides follow from the parent's knots and the cutoff.
inline Json tree_to_json(const DecisionTree& tree) {
  Json nodes = Json::array();
  for (int id = 0; id < tree.size(); ++id) {
    const Node& n = tree.node(id);
    Json j{{"id", id}, {"parent", n.parent}, {"is_leaf", n.is_leaf()}};
    if (n.is_leaf()) {
      j["rule"] = nullptr;
      j["decision"] = nullptr;
      j["c_eta"] = nullptr;
      j["mu"] = n.mu;
    } else {
      const SplitRule& r = n.split->rule;
      Json rule;
      if (r.is_multivariate()) {
        rule = {{"kind", "multivariate"}, {"left_knots", r.left_knots}, {"right_knots", r.right_knots}};
      } else {
        rule = {{"kind", "univariate"}, {"feature", r.feature}, {"cutoff", r.cutoff}};
      }
      j["rule"] = rule;
      j["decision"] = n.decision.level;
      j["c_eta"] = n.split->c_eta;
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return Json{{"nodes", nodes}};
}

namespace detail {

inline SubtreeHandle induced_subtree(const SubtreeHandle& parent, std::vector<int> subset) {
  std::sort(subset.begin(), subset.end());
  SubtreeHandle h;
  for (const Edge& e : parent.edges)
    if (std::binary_search(subset.begin(), subset.end(), e.a) && std::binary_search(subset.begin(), subset.end(), e.b))
      h.edges.push_back(e);
  h.vertices = std::move(subset);
  return h;
}

}  // namespace detail

// Rebuilds a tree against `ks`. Training gaps are not stored, so the result
// supports prediction but not further sampling.
inline DecisionTree tree_from_json(const Json& j, const KnotSystem& ks) {
  const auto& nodes = j.at("nodes");
  if (nodes.empty()) throw ValidationError("tree has no nodes");
  DecisionTree tree(std::make_shared<SubtreeHandle>(ks.root_subtree()));
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].at("id").get<std::size_t>() != i) throw ValidationError("tree node ids must be 0..N-1 in order");
  // Children are appended in pairs when a node splits, so replaying splits in
  // order of left-child id reproduces the stored ids.
  std::vector<std::pair<std::size_t, std::size_t>> splits;  // (left id, node id)
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].at("is_leaf").get<bool>()) splits.emplace_back(nodes[i].at("left").get<std::size_t>(), i);
  std::sort(splits.begin(), splits.end());
  for (const auto& [l, i] : splits) {
    const auto& n = nodes[i];
    const int cur = static_cast<int>(i);
    const std::size_t r = n.at("right").get<std::size_t>();
    if (l != static_cast<std::size_t>(tree.size()) || r != l + 1 || l >= nodes.size() || cur >= tree.size() ||
        !tree.node(cur).is_leaf())
      throw ValidationError("tree node " + std::to_string(i) + " has inconsistent child ids");
    const auto& rj = n.at("rule");
    const SubtreeHandle& knots = *tree.node(cur).knots;
    SplitRule rule;
    SubtreeHandle left, right;
    if (rj.at("kind") == "multivariate") {
      rule.kind = SplitRule::Kind::Multivariate;
      rule.left_knots = rj.at("left_knots").get<std::vector<int>>();
      rule.right_knots = rj.at("right_knots").get<std::vector<int>>();
      left = detail::induced_subtree(knots, rule.left_knots);
      right = detail::induced_subtree(knots, rule.right_knots);
    } else {
      const int feature = rj.at("feature");
      if (feature < 0 || feature >= ks.x.cols()) throw ValidationError("rule feature out of range");
      rule = detail::univariate_rule(knots, ks, feature, rj.at("cutoff").get<double>());
      left = ks.subtree_for(rule.left_knots);
      right = ks.subtree_for(rule.right_knots);
    }
    auto split = std::make_shared<SplitData>();
    split->rule = std::move(rule);
    split->c_eta = n.at("c_eta").get<double>();
    tree.grow(cur, std::move(split), DecisionType{n.at("decision").get<int>()},
              std::make_shared<SubtreeHandle>(std::move(left)), std::make_shared<SubtreeHandle>(std::move(right)));
  }
  if (static_cast<std::size_t>(tree.size()) != nodes.size()) throw ValidationError("tree has unreachable nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].at("is_leaf").get<bool>()) tree.node(static_cast<int>(i)).mu = nodes[i].at("mu").get<double>();
  return tree;
}

inline Json state_to_json(const PosteriorState& s) {
  Json trees = Json::array();
  for (const auto& t : s.trees) trees.push_back(tree_to_json(t));
  return Json{{"trees", trees}, {"sigma2", s.sigma2}, {"sigma_mu2", s.sigma_mu2}, {"p_A", s.p_a}, {"alpha", s.alpha}};
}

inline PosteriorState state_from_json(const Json& j, const KnotSystem& ks) {
  PosteriorState s;
  for (const auto& t : j.at("trees")) s.trees.push_back(tree_from_json(t, ks));
  s.sigma2 = j.at("sigma2");
  s.sigma_mu2 = j.at("sigma_mu2");
  s.p_a = j.at("p_A").get<std::vector<double>>();
  s.alpha = j.at("alpha").get<std::vector<double>>();
  return s;
}

inline Json stats_to_json(const MoveStats& m) {
  return Json{{"grow", {m.grow_proposed, m.grow_accepted}},
              {"prune", {m.prune_proposed, m.prune_accepted}},
              {"change", {m.change_proposed, m.change_accepted}},
              {"alpha", {m.alpha_proposed, m.alpha_accepted}}};
}

inline MoveStats stats_from_json(const Json& j) {
  MoveStats m;
  m.grow_proposed = j.at("grow")[0];
  m.grow_accepted = j.at("grow")[1];
  m.prune_proposed = j.at("prune")[0];
  m.prune_accepted = j.at("prune")[1];
  m.change_proposed = j.at("change")[0];
  m.change_accepted = j.at("change")[1];
  m.alpha_proposed = j.at("alpha")[0];
  m.alpha_accepted = j.at("alpha")[1];
  return m;
}

inline Json header_to_json(const FittedModel& m) {
  Json edges = Json::array();
  for (const auto& e : m.knots.mst.edges) edges.push_back({e.a, e.b});
  return Json{{"format", "sbamdt-model-1"},
              {"variant", to_string(m.config.variant)},
              {"ablation", to_string(m.config.ablation)},
              {"seed", m.config.seed},
              {"n_iter", m.config.n_iter},
              {"burn_in", m.config.burn_in},
              {"thin", m.config.thin},
              {"n_chains", m.config.n_chains},
              {"hyperparams", hyperparams_to_json(m.config.hyper)},
              {"resolved", hyperparams_to_json(m.resolved)},
              {"scaling", {{"y_min", m.scaling.y_min}, {"y_max", m.scaling.y_max}}},
              {"n_structured", m.n_structured},
              {"n_unstructured", m.n_unstructured},
              {"knots",
               {{"indices", m.knots.train_index},
                {"s", matrix_to_json(m.knots.s)},
                {"x", matrix_to_json(m.knots.x)},
                {"s_center", vector_to_json(m.knots.s_center)},
                {"s_scale", vector_to_json(m.knots.s_scale)},
                {"embedding", matrix_to_json(m.knots.embedding.coords)},
                {"eigenvalues", vector_to_json(m.knots.embedding.eigenvalues)},
                {"mst", edges}}},
              {"cutoffs", m.grid.values},
              {"move_stats", stats_to_json(m.stats)},
              {"snapshots", m.snapshots.size()}};
}

inline void apply_header(FittedModel& m, const Json& h) {
  if (h.value("format", "") != "sbamdt-model-1") throw ValidationError("unrecognised model header format");
  m.config.variant = parse_variant(h.at("variant"));
  m.config.ablation = parse_ablation(h.at("ablation"));
  m.config.seed = h.at("seed");
  m.config.n_iter = h.at("n_iter");
  m.config.burn_in = h.at("burn_in");
  m.config.thin = h.at("thin");
  m.config.n_chains = h.at("n_chains");
  m.config.hyper = hyperparams_from_json(h.at("hyperparams"));
  m.resolved = hyperparams_from_json(h.at("resolved"));
  m.scaling.y_min = h.at("scaling").at("y_min");
  m.scaling.y_max = h.at("scaling").at("y_max");
  m.n_structured = h.at("n_structured");
  m.n_unstructured = h.at("n_unstructured");
  const auto& k = h.at("knots");
  m.knots.train_index = k.at("indices").get<std::vector<int>>();
  m.knots.s = matrix_from_json(k.at("s"));
  m.knots.x = matrix_from_json(k.at("x"));
  m.knots.s_center = vector_from_json(k.at("s_center"));
  m.knots.s_scale = vector_from_json(k.at("s_scale"));
  m.knots.embedding.coords = matrix_from_json(k.at("embedding"));
  m.knots.embedding.eigenvalues = vector_from_json(k.at("eigenvalues"));
  m.knots.mst.n = static_cast<int>(m.knots.s.rows());
  m.knots.mst.edges.clear();
  for (const auto& e : k.at("mst")) m.knots.mst.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  m.grid.values = h.at("cutoffs").get<std::vector<std::vector<double>>>();
  m.stats = stats_from_json(h.at("move_stats"));
}

inline void write_snapshots(std::ostream& out, const std::vector<PosteriorState>& snaps) {
  for (const auto& s : snaps) out << state_to_json(s).dump() << '\n';
}

inline constexpr const char* kHeaderFile = "model.json";
inline constexpr const char* kSnapshotFile = "snapshots.ndjson";

inline void save_model(const FittedModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kHeaderFile, std::ios::binary);
    if (!out) throw NumericalError("cannot write " + (dir / kHeaderFile).string());
    out << header_to_json(m).dump(2) << '\n';
  }
  std::ofstream out(dir / kSnapshotFile, std::ios::binary);
  if (!out) throw NumericalError("cannot write " + (dir / kSnapshotFile).string());
  write_snapshots(out, m.snapshots);
}

inline FittedModel load_model(const std::filesystem::path& dir) {
  std::ifstream hin(dir / kHeaderFile);
  if (!hin) throw ValidationError("cannot open " + (dir / kHeaderFile).string());
  FittedModel m;
  try {
    apply_header(m, Json::parse(hin));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed model header: ") + e.what());
  }
  std::ifstream sin(dir / kSnapshotFile);
  if (!sin) throw ValidationError("cannot open " + (dir / kSnapshotFile).string());
  std::string line;
  int line_no = 0;
  while (std::getline(sin, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      m.snapshots.push_back(state_from_json(Json::parse(line), m.knots));
    } catch (const Json::exception& e) {
      throw ValidationError(std::string(kSnapshotFile) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (m.snapshots.empty()) throw ValidationError("model has no posterior snapshots");
  return m;
}

}  // namespace sbamdt
