#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "doctest.h"
#include "mrcgat/errors.hpp"
#include "mrcgat/graph.hpp"
#include "mrcgat/rng.hpp"

using namespace mrcgat;

namespace {

Matrix random_distances(std::size_t n, RngStream& rng, double scale = 2.0) {
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = scale * rng.uniform();
  return d;
}

std::set<std::pair<std::size_t, std::size_t>> gated_edges(const RelationalGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const Edge& e : g.edges)
    if (!e.fallback) out.insert({e.src, e.dst});
  return out;
}

}  // namespace

TEST_CASE("dense weights") {
  const Matrix w = dense_weights(Matrix{{0.0, 0.0, 1.0}, {0.0, 0.0, 3.0}, {1.0, 3.0, 0.0}});
  CHECK(w(0, 1) == 1.0);
  CHECK(w(0, 2) == 0.5);
  CHECK(w(1, 2) == 0.25);
  CHECK(w(0, 0) == 0.0);
}

TEST_CASE("knn selection") {
  const Matrix d{{0, 5, 1, 3}, {5, 0, 2, 2}, {1, 2, 0, 4}, {3, 2, 4, 0}};
  const auto nn = knn_select(d, 1);
  CHECK(nn[0] == std::vector<std::size_t>{2});
  CHECK(nn[1] == std::vector<std::size_t>{2});  // tie between 2 and 3 goes to the lower index
  CHECK(knn_select(Matrix(3, 3), 2)[1] == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(knn_select(d, 4), ConfigError);
  CHECK_THROWS_AS(knn_select(d, 0), ConfigError);
}

TEST_CASE("knn graph is directed") {
  // Node 0 is 1's nearest, but 0's nearest is 2.
  const Matrix d{{0, 1, 0.5}, {1, 0, 3}, {0.5, 3, 0}};
  const RelationalGraph g = knn_graph(d, 1);
  const auto edges = gated_edges(g);
  CHECK(edges.count({0, 1}) == 1);
  CHECK(edges.count({1, 0}) == 0);
  CHECK(edges.count({2, 0}) == 1);
}

TEST_CASE("threshold gate") {
  const Matrix d{{0, 0.5, 1.5, 2.0}, {0.5, 0, 9, 9}, {1.5, 9, 0, 9}, {2.0, 9, 9, 0}};
  const RelationalGraph full = knn_graph(d, 3);
  const RelationalGraph g = threshold_gate(full, d, 1.0);
  std::size_t into0 = 0;
  for (const Edge& e : g.edges)
    if (e.dst == 0) {
      ++into0;
      CHECK(e.src == 1);
      CHECK_FALSE(e.fallback);
    }
  CHECK(into0 == 1);
  CHECK(threshold_gate(full, d, std::numeric_limits<double>::infinity()) == full);
  CHECK_THROWS_AS(threshold_gate(full, d, 0.0), ConfigError);

  const RelationalGraph tiny = threshold_gate(full, d, 0.1);
  const auto deg = tiny.in_degree();
  for (std::size_t i = 0; i < 4; ++i) CHECK(deg[i] == 1);
  CHECK(tiny.fallback_count() == 4);
  for (const Edge& e : tiny.edges) CHECK(e.src == knn_select(d, 1)[e.dst][0]);
  CHECK_THROWS_AS(threshold_gate(full, d, 0.1, FallbackPolicy::kError), DegenerateEpisodeError);
}

TEST_CASE("graph invariants on random distances") {
  RngStream rng(21, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 7 + trial % 25;
    const Matrix d = random_distances(n, rng);
    const double tau1 = 0.2 + rng.uniform();
    const double tau2 = tau1 + rng.uniform();
    const auto graphs = build_relational_graphs({d, d, d}, 6, tau1);
    CHECK(graphs[0] == graphs[1]);
    CHECK(graphs[0].edges.size() <= n * 6);
    const auto deg = graphs[0].in_degree();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(deg[i] >= 1);
      CHECK(deg[i] <= 6);
    }
    for (const Edge& e : graphs[0].edges) {
      CHECK(e.src != e.dst);
      CHECK(e.weight == 1.0 / (1.0 + d(e.src, e.dst)));
      if (!e.fallback) CHECK(d(e.src, e.dst) <= tau1);
    }
    const auto loose = threshold_gate(knn_graph(d, 6), d, tau2);
    const auto a = gated_edges(graphs[0]);
    const auto b = gated_edges(loose);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST_CASE("edge list text") {
  const Matrix d{{0, 1, 3}, {1, 0, 2}, {3, 2, 0}};
  const auto graphs = build_relational_graphs({d, d, d}, 1, 1.5);
  const std::string text = format_graph_edges(graphs);
  CHECK(text.find("RF 1 0 0.500000 0\n") != std::string::npos);
  CHECK(text.find("MRI 1 2 0.333333 1\n") != std::string::npos);
}
