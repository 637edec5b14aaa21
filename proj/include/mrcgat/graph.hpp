#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "mrcgat/dataset.hpp"
#include "mrcgat/matrix.hpp"

namespace mrcgat {

// Directed edge src -> dst; dst aggregates messages from src.
struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 0.0;
  double distance = 0.0;
  bool fallback = false;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct RelationalGraph {
  std::size_t node_count = 0;
  std::size_t k = 0;
  double tau = std::numeric_limits<double>::infinity();
  // Grouped by destination in ascending order; within a destination, nearest first.
  std::vector<Edge> edges;

  std::vector<std::size_t> in_degree() const;
  std::size_t fallback_count() const;

  friend bool operator==(const RelationalGraph&, const RelationalGraph&) = default;
};

enum class FallbackPolicy { kNearestNeighbor, kError };

// w_ij = 1 / (1 + D_ij) off the diagonal, 0 on it.
Matrix dense_weights(const Matrix& distance);

// For each node i, the k nodes j != i with smallest D_ij, nearest first; equal
// distances resolve to the lower index. Throws ConfigError unless 1 <= k < N.
std::vector<std::vector<std::size_t>> knn_select(const Matrix& distance, std::size_t k);

// Edges j -> i for every j in knn_select(D, k)[i], weighted by dense_weights.
RelationalGraph knn_graph(const Matrix& distance, std::size_t k);

// Drops edges with D > tau. A node left without in-edges gets its single
// nearest neighbor back as a fallback edge, or DegenerateEpisodeError is
// thrown under FallbackPolicy::kError.
RelationalGraph threshold_gate(const RelationalGraph& graph, const Matrix& distance, double tau,
                               FallbackPolicy policy = FallbackPolicy::kNearestNeighbor);

std::array<RelationalGraph, kRelationCount> build_relational_graphs(
    const std::array<Matrix, kRelationCount>& distances, std::size_t k, double tau,
    FallbackPolicy policy = FallbackPolicy::kNearestNeighbor);

// One line per edge: `relation src dst weight fallback_flag`, weights with 6 decimals.
std::string format_graph_edges(const std::array<RelationalGraph, kRelationCount>& graphs);

}  // namespace mrcgat
