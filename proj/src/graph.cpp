#include "mrcgat/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "mrcgat/errors.hpp"

namespace mrcgat {

std::vector<std::size_t> RelationalGraph::in_degree() const {
  std::vector<std::size_t> deg(node_count, 0);
  for (const Edge& e : edges) ++deg[e.dst];
  return deg;
}

std::size_t RelationalGraph::fallback_count() const {
  return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [](const Edge& e) { return e.fallback; }));
}

Matrix dense_weights(const Matrix& distance) {
  Matrix w(distance.rows(), distance.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      if (i != j) w(i, j) = 1.0 / (1.0 + distance(i, j));
  return w;
}

std::vector<std::vector<std::size_t>> knn_select(const Matrix& distance, std::size_t k) {
  const std::size_t n = distance.rows();
  if (distance.cols() != n) throw ShapeError("knn_select: distance matrix is not square");
  if (k < 1 || k >= n)
    throw ConfigError("knn budget k=" + std::to_string(k) + " must satisfy 1 <= k < N=" + std::to_string(n));
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) candidates.push_back(j);
    auto closer = [&](std::size_t a, std::size_t b) {
      if (distance(i, a) != distance(i, b)) return distance(i, a) < distance(i, b);
      return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      closer);
    out[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

RelationalGraph knn_graph(const Matrix& distance, std::size_t k) {
  RelationalGraph g;
  g.node_count = distance.rows();
  g.k = k;
  const auto neighbors = knn_select(distance, k);
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    for (std::size_t j : neighbors[i]) g.edges.push_back({j, i, 1.0 / (1.0 + distance(i, j)), distance(i, j), false});
  return g;
}

RelationalGraph threshold_gate(const RelationalGraph& graph, const Matrix& distance, double tau,
                               FallbackPolicy policy) {
  if (!(tau > 0.0)) throw ConfigError("threshold tau must be positive");
  RelationalGraph out;
  out.node_count = graph.node_count;
  out.k = graph.k;
  out.tau = tau;
  std::vector<bool> has_edge(graph.node_count, false);
  for (const Edge& e : graph.edges) {
    if (e.fallback || e.distance > tau) continue;
    out.edges.push_back(e);
    has_edge[e.dst] = true;
  }
  std::vector<Edge> fallbacks;
  for (std::size_t i = 0; i < graph.node_count; ++i) {
    if (has_edge[i]) continue;
    if (policy == FallbackPolicy::kError)
      throw DegenerateEpisodeError("threshold tau=" + std::to_string(tau) + " isolates node " + std::to_string(i));
    const std::size_t nearest = knn_select(distance, 1)[i].front();
    fallbacks.push_back({nearest, i, 1.0 / (1.0 + distance(i, nearest)), distance(i, nearest), true});
  }
  if (!fallbacks.empty()) {
    out.edges.insert(out.edges.end(), fallbacks.begin(), fallbacks.end());
    std::stable_sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) { return a.dst < b.dst; });
  }
  return out;
}

std::array<RelationalGraph, kRelationCount> build_relational_graphs(const std::array<Matrix, kRelationCount>& distances,
                                                                    std::size_t k, double tau, FallbackPolicy policy) {
  std::array<RelationalGraph, kRelationCount> out;
  for (std::size_t g = 0; g < kRelationCount; ++g)
    out[g] = threshold_gate(knn_graph(distances[g], k), distances[g], tau, policy);
  return out;
}

std::string format_graph_edges(const std::array<RelationalGraph, kRelationCount>& graphs) {
  std::string text;
  char line[128];
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    for (const Edge& e : graphs[g].edges) {
      std::snprintf(line, sizeof(line), "%s %zu %zu %.6f %d\n", kRelationNames[g], e.src, e.dst, e.weight,
                    e.fallback ? 1 : 0);
      text += line;
    }
  }
  return text;
}

}  // namespace mrcgat
