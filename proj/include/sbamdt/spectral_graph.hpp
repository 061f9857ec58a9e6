#pragma once

// Spanning-tree machinery over reference knots: Gaussian similarity graph,
// normalized Laplacian, spectral embedding, minimum spanning tree and
// edge-removal bipartitions of (sub-)spanning trees.

#include <algorithm>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sbamdt/core.hpp"

namespace sbamdt {

struct StructuredPointSet {
  Matrix points;  // one row per point

  StructuredPointSet() = default;
  explicit StructuredPointSet(Matrix pts) : points(std::move(pts)) { validate(); }

  static StructuredPointSet from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("point set is empty");
    const std::size_t dim = rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != dim)
        throw ValidationError("dimension mismatch among structured points");
      for (std::size_t j = 0; j < dim; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return StructuredPointSet(std::move(m));
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

 private:
  void validate() const {
    if (points.rows() < 2) throw ValidationError("need at least 2 structured points");
    if (points.cols() < 1) throw ValidationError("structured dimension must be >= 1");
    if (!points.allFinite()) throw ValidationError("structured points must be finite");
  }
};

struct WeightedGraph {
  Matrix weights;  // symmetric, zero diagonal
  Eigen::Index size() const { return weights.rows(); }
};

struct Embedding {
  Matrix coords;       // n x k
  Vector eigenvalues;  // the k retained eigenvalues, ascending
  Eigen::Index dim() const { return coords.cols(); }
};

struct Edge {
  int a = 0;
  int b = 0;
  Edge() = default;
  Edge(int u, int v) : a(std::min(u, v)), b(std::max(u, v)) {}
  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
  bool touches(int v) const { return a == v || b == v; }
  int other(int v) const { return a == v ? b : a; }
};

struct SpanningTree {
  int n = 0;
  std::vector<Edge> edges;
};

// Vertex subset (sorted ids) of a larger spanning tree together with the
// tree edges that connect it.
struct SubtreeHandle {
  std::vector<int> vertices;
  std::vector<Edge> edges;

  std::size_t size() const { return vertices.size(); }
  bool contains(int v) const { return std::binary_search(vertices.begin(), vertices.end(), v); }
  bool has_edge(const Edge& e) const { return std::find(edges.begin(), edges.end(), e) != edges.end(); }

  static SubtreeHandle whole(const SpanningTree& t) {
    SubtreeHandle h;
    h.vertices.resize(static_cast<std::size_t>(t.n));
    std::iota(h.vertices.begin(), h.vertices.end(), 0);
    h.edges = t.edges;
    return h;
  }
};

inline WeightedGraph build_similarity(const StructuredPointSet& pts) {
  const Eigen::Index n = pts.size();
  WeightedGraph g;
  g.weights = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = std::exp(-(pts.points.row(i) - pts.points.row(j)).squaredNorm());
      g.weights(i, j) = w;
      g.weights(j, i) = w;
    }
  return g;
}

// L = I - D^{-1/2} W D^{-1/2}
inline Matrix normalized_laplacian(const WeightedGraph& g) {
  const Eigen::Index n = g.size();
  Vector deg = g.weights.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(deg(i) > 0.0)) throw ValidationError("graph has an isolated vertex (zero degree)");
  Vector inv_sqrt = deg.array().rsqrt();
  Matrix lap = -(inv_sqrt.asDiagonal() * g.weights * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  // exact symmetry
  return 0.5 * (lap + lap.transpose());
}

// Eigenvectors of the k smallest eigenvalues exceeding zero_tol * lambda_max.
inline Embedding spectral_embedding(const Matrix& laplacian, int k, double zero_tol = 1e-8) {
  const Eigen::Index n = laplacian.rows();
  if (k < 1) throw ValidationError("embedding dimension must be >= 1");
  if (k >= n) throw ValidationError("embedding dimension must be < number of vertices");
  Eigen::SelfAdjointEigenSolver<Matrix> es(laplacian);
  if (es.info() != Eigen::Success) throw NumericalError("Laplacian eigendecomposition failed");
  const Vector& ev = es.eigenvalues();  // ascending
  const double threshold = zero_tol * std::max(std::abs(ev(n - 1)), 1e-300);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n && static_cast<int>(keep.size()) < k; ++i)
    if (ev(i) > threshold) keep.push_back(i);
  if (static_cast<int>(keep.size()) < k)
    throw ValidationError("fewer than k non-zero Laplacian eigenvalues (disconnected or degenerate graph)");
  Embedding emb;
  emb.coords.resize(n, k);
  emb.eigenvalues.resize(k);
  for (int c = 0; c < k; ++c) {
    emb.coords.col(c) = es.eigenvectors().col(keep[static_cast<std::size_t>(c)]).normalized();
    emb.eigenvalues(c) = ev(keep[static_cast<std::size_t>(c)]);
  }
  return emb;
}

namespace detail {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(b)] = a;
    return true;
  }
};

// Kruskal over the complete graph of the given rows; ties by (i, j).
inline std::vector<Edge> kruskal_rows(const Matrix& coords, std::span<const int> rows) {
  const int n = static_cast<int>(rows.size());
  struct Cand {
    double w;
    int i, j;
  };
  std::vector<Cand> cands;
  cands.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      cands.push_back({(coords.row(rows[static_cast<std::size_t>(i)]) - coords.row(rows[static_cast<std::size_t>(j)])).norm(), i, j});
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  DisjointSets ds(n);
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(std::max(n - 1, 0)));
  for (const auto& c : cands) {
    if (ds.unite(c.i, c.j)) out.emplace_back(rows[static_cast<std::size_t>(c.i)], rows[static_cast<std::size_t>(c.j)]);
    if (static_cast<int>(out.size()) == n - 1) break;
  }
  return out;
}

inline std::vector<std::vector<int>> adjacency(const SubtreeHandle& t, int n_global) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_global));
  for (const auto& e : t.edges) {
    adj[static_cast<std::size_t>(e.a)].push_back(e.b);
    adj[static_cast<std::size_t>(e.b)].push_back(e.a);
  }
  return adj;
}

inline int max_vertex(const SubtreeHandle& t) {
  return t.vertices.empty() ? 0 : t.vertices.back() + 1;
}

}  // namespace detail

inline SpanningTree minimum_spanning_tree(const Embedding& emb) {
  const int n = static_cast<int>(emb.coords.rows());
  if (n < 2) throw ValidationError("spanning tree needs at least 2 vertices");
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return SpanningTree{n, detail::kruskal_rows(emb.coords, rows)};
}

// Edges of the unique simple path from u to v, in order from u.
inline std::vector<Edge> tree_path(const SubtreeHandle& t, int u, int v) {
  if (!t.contains(u) || !t.contains(v)) throw ValidationError("vertex not in subtree");
  if (u == v) throw ValidationError("path endpoints must differ");
  const auto adj = detail::adjacency(t, detail::max_vertex(t));
  std::vector<int> prev(adj.size(), -1);
  std::queue<int> q;
  q.push(u);
  prev[static_cast<std::size_t>(u)] = u;
  while (!q.empty()) {
    const int x = q.front();
    q.pop();
    if (x == v) break;
    for (int y : adj[static_cast<std::size_t>(x)])
      if (prev[static_cast<std::size_t>(y)] < 0) {
        prev[static_cast<std::size_t>(y)] = x;
        q.push(y);
      }
  }
  if (prev[static_cast<std::size_t>(v)] < 0) throw ValidationError("vertices are not connected in subtree");
  std::vector<Edge> path;
  for (int x = v; x != u; x = prev[static_cast<std::size_t>(x)])
    path.emplace_back(prev[static_cast<std::size_t>(x)], x);
  std::reverse(path.begin(), path.end());
  return path;
}

inline std::vector<Edge> tree_path(const SpanningTree& t, int u, int v) {
  return tree_path(SubtreeHandle::whole(t), u, v);
}

// Hop distances from `source` to every vertex of the subtree (-1 outside).
inline std::vector<int> hop_distances(const SubtreeHandle& t, int source) {
  const auto adj = detail::adjacency(t, detail::max_vertex(t));
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int x = q.front();
    q.pop();
    for (int y : adj[static_cast<std::size_t>(x)])
      if (dist[static_cast<std::size_t>(y)] < 0) {
        dist[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(x)] + 1;
        q.push(y);
      }
  }
  return dist;
}

// Removing `removed` splits the subtree into two sub-spanning trees; the first
// one holds the edge's lower endpoint.
inline std::pair<SubtreeHandle, SubtreeHandle> bipartition(const SubtreeHandle& t, const Edge& removed) {
  if (!t.has_edge(removed)) throw ValidationError("edge not present in subtree");
  SubtreeHandle rest = t;
  rest.edges.erase(std::find(rest.edges.begin(), rest.edges.end(), removed));
  const auto dist = hop_distances(rest, removed.a);
  SubtreeHandle first, second;
  for (int v : t.vertices)
    (dist[static_cast<std::size_t>(v)] >= 0 ? first : second).vertices.push_back(v);
  for (const auto& e : rest.edges)
    (dist[static_cast<std::size_t>(e.a)] >= 0 ? first : second).edges.push_back(e);
  return {std::move(first), std::move(second)};
}

// Reference knots with their standardized structured coordinates, spectral
// embedding and global minimum spanning tree.
struct KnotSystem {
  std::vector<int> train_index;  // knot i is training row train_index[i]
  Matrix s;                      // t x d_M standardized structured coordinates
  Matrix x;                      // t x p unstructured features
  Vector s_center;
  Vector s_scale;
  Embedding embedding;
  SpanningTree mst;

  int size() const { return static_cast<int>(s.rows()); }

  Matrix standardize(const Matrix& raw) const {
    Matrix out = raw.rowwise() - s_center.transpose();
    return out.array().rowwise() / s_scale.transpose().array();
  }

  // Spanning tree over `subset` (sorted knot ids): the induced subtree of the
  // global MST when connected, otherwise the MST of the subset in the
  // embedded space.
  SubtreeHandle subtree_for(std::vector<int> subset) const {
    std::sort(subset.begin(), subset.end());
    SubtreeHandle h;
    std::vector<char> in(static_cast<std::size_t>(size()), 0);
    for (int v : subset) in[static_cast<std::size_t>(v)] = 1;
    for (const auto& e : mst.edges)
      if (in[static_cast<std::size_t>(e.a)] && in[static_cast<std::size_t>(e.b)]) h.edges.push_back(e);
    if (h.edges.size() + 1 != subset.size() && subset.size() > 1)
      h.edges = detail::kruskal_rows(embedding.coords, subset);
    h.vertices = std::move(subset);
    return h;
  }

  SubtreeHandle root_subtree() const { return SubtreeHandle::whole(mst); }
};

inline std::pair<Vector, Vector> column_standardization(const Matrix& pts) {
  const double n = static_cast<double>(pts.rows());
  Vector center = pts.colwise().mean().transpose();
  Vector scale(pts.cols());
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    const double var = (pts.col(j).array() - center(j)).square().sum() / std::max(n - 1.0, 1.0);
    scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return {center, scale};
}

// `train_s` and `train_x` are the full training matrices; standardization
// uses all training rows.
inline KnotSystem build_knot_system(const Matrix& train_s, const Matrix& train_x,
                                    std::vector<int> knot_rows, int embed_dim = 0,
                                    double zero_tol = 1e-8) {
  if (knot_rows.size() < 2) throw ValidationError("need at least 2 knots");
  KnotSystem ks;
  ks.train_index = std::move(knot_rows);
  std::tie(ks.s_center, ks.s_scale) = column_standardization(train_s);
  const auto t = static_cast<Eigen::Index>(ks.train_index.size());
  Matrix raw_s(t, train_s.cols());
  ks.x.resize(t, train_x.cols());
  for (Eigen::Index i = 0; i < t; ++i) {
    raw_s.row(i) = train_s.row(ks.train_index[static_cast<std::size_t>(i)]);
    ks.x.row(i) = train_x.row(ks.train_index[static_cast<std::size_t>(i)]);
  }
  ks.s = ks.standardize(raw_s);
  const int k = embed_dim > 0 ? embed_dim : static_cast<int>(std::min<Eigen::Index>(3, t - 1));
  const auto graph = build_similarity(StructuredPointSet(ks.s));
  ks.embedding = spectral_embedding(normalized_laplacian(graph), k, zero_tol);
  ks.mst = minimum_spanning_tree(ks.embedding);
  return ks;
}

}  // namespace sbamdt
