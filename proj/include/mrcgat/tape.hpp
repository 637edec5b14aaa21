#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mrcgat/matrix.hpp"

namespace mrcgat {

// Reverse-mode tape over dense matrices. Supports exactly the primitives the
// relational GAT needs. Nodes are appended in evaluation order, so the node
// list is already topologically sorted; backward() walks it in reverse.
//
// A tape is single-threaded. Build one per episode.
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  enum class Axis { kRows, kCols };

  // Leaf whose gradient is accumulated by backward().
  Var parameter(Matrix value);
  // Leaf that never receives a gradient.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Adjoint after backward(); zero matrix if the node did not influence the output.
  const Matrix& grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  // a * b^T
  Var matmul_nt(Var a, Var b);
  // Elementwise sum. b may also be a 1 x cols row broadcast over a's rows.
  Var add(Var a, Var b);
  Var concat(std::span<const Var> parts, Axis axis);
  Var scale(Var a, double s);
  Var leaky_relu(Var a, double slope);
  Var elu(Var a);
  Var relu(Var a);
  Var log(Var a);
  // Elementwise product with a fixed mask (inverted-dropout scaling baked into the mask).
  Var dropout(Var a, Matrix mask);
  // Output row r is row index[r] of a.
  Var gather_rows(Var a, std::vector<std::size_t> index);
  // Softmax over the flattened entries of a, grouped by segment[e] in [0, segments).
  Var segment_softmax(Var a, std::vector<std::size_t> segment, std::size_t segments);
  // out[dst[e]] += weight[e] * values[src[e]] with weight read in flattened order.
  Var weighted_neighbor_sum(Var weight, Var values, std::vector<std::size_t> src, std::vector<std::size_t> dst,
                            std::size_t out_rows);
  // -(1 - p)^gamma * log(max(p, 1e-12)) for a 1 x 1 probability.
  Var focal_loss(Var p, double gamma);

  // Seeds d(out)/d(out) = 1 for a 1 x 1 output and propagates adjoints.
  void backward(Var out);

 private:
  enum class Op {
    kLeaf,
    kMatmul,
    kMatmulNT,
    kAdd,
    kAddRow,
    kConcat,
    kScale,
    kLeakyRelu,
    kElu,
    kRelu,
    kLog,
    kDropout,
    kGatherRows,
    kSegmentSoftmax,
    kWeightedNeighborSum,
    kFocal,
  };

  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    double scalar = 0.0;
    Axis axis = Axis::kRows;
    Matrix aux;
    std::vector<std::size_t> index_a;
    std::vector<std::size_t> index_b;
  };

  Var push(Node node);
  void accumulate(std::size_t id, const Matrix& g);
  Matrix& grad_slot(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace mrcgat
