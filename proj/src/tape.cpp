#include "mrcgat/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mrcgat/errors.hpp"

namespace mrcgat {

namespace {

constexpr double kFocalFloor = 1e-12;

std::string shape_of(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

Tape::Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Tape::Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

const Matrix& Tape::grad(Var v) const { return nodes_[v.id].grad; }

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  grad_slot(id) += g;
}

Tape::Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatmul;
  n.inputs = {a.id, b.id};
  n.value = mrcgat::matmul(value(a), value(b));
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  Node n;
  n.op = Op::kMatmulNT;
  n.inputs = {a.id, b.id};
  n.value = mrcgat::matmul_nt(value(a), value(b));
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  Node n;
  n.inputs = {a.id, b.id};
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  if (va.rows() == vb.rows() && va.cols() == vb.cols()) {
    n.op = Op::kAdd;
    n.value = va + vb;
  } else if (vb.rows() == 1 && vb.cols() == va.cols()) {
    n.op = Op::kAddRow;
    n.value = va;
    for (std::size_t r = 0; r < va.rows(); ++r)
      for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) += vb(0, c);
  } else {
    throw ShapeError("tape add: " + shape_of(va) + " + " + shape_of(vb));
  }
  return push(std::move(n));
}

Tape::Var Tape::concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) throw ShapeError("tape concat: no inputs");
  Node n;
  n.op = Op::kConcat;
  n.axis = axis;
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    const Matrix& v = value(p);
    if (axis == Axis::kCols) {
      if (rows == 0 && cols == 0) rows = v.rows();
      if (v.rows() != rows) throw ShapeError("tape concat: row mismatch " + shape_of(v));
      cols += v.cols();
    } else {
      if (rows == 0 && cols == 0) cols = v.cols();
      if (v.cols() != cols) throw ShapeError("tape concat: column mismatch " + shape_of(v));
      rows += v.rows();
    }
    n.inputs.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  n.value = Matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = value(p);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == Axis::kCols)
          n.value(r, offset + c) = v(r, c);
        else
          n.value(offset + r, c) = v(r, c);
      }
    offset += axis == Axis::kCols ? v.cols() : v.rows();
  }
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.scalar = s;
  n.value = value(a) * s;
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::leaky_relu(Var a, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.inputs = {a.id};
  n.scalar = slope;
  n.value = value(a);
  for (double& x : n.value.data()) x = x > 0.0 ? x : slope * x;
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::elu(Var a) {
  Node n;
  n.op = Op::kElu;
  n.inputs = {a.id};
  n.value = value(a);
  for (double& x : n.value.data()) x = x > 0.0 ? x : std::expm1(x);
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a.id};
  n.value = value(a);
  for (double& x : n.value.data()) x = x > 0.0 ? x : 0.0;
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.inputs = {a.id};
  n.value = value(a);
  for (double& x : n.value.data()) {
    if (!(x > 0.0)) throw DomainError("tape log: non-positive input");
    x = std::log(x);
  }
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::dropout(Var a, Matrix mask) {
  const Matrix& va = value(a);
  if (mask.rows() != va.rows() || mask.cols() != va.cols())
    throw ShapeError("tape dropout: mask " + shape_of(mask) + " vs input " + shape_of(va));
  Node n;
  n.op = Op::kDropout;
  n.inputs = {a.id};
  n.value = va;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= mask[i];
  n.aux = std::move(mask);
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var a, std::vector<std::size_t> index) {
  const Matrix& va = value(a);
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a.id};
  n.value = Matrix(index.size(), va.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= va.rows()) throw ShapeError("tape gather_rows: index out of range");
    for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) = va(index[r], c);
  }
  n.index_a = std::move(index);
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::segment_softmax(Var a, std::vector<std::size_t> segment, std::size_t segments) {
  const Matrix& va = value(a);
  if (segment.size() != va.size()) throw ShapeError("tape segment_softmax: segment list length mismatch");
  std::vector<double> peak(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < segment.size(); ++e) {
    if (segment[e] >= segments) throw ShapeError("tape segment_softmax: segment id out of range");
    peak[segment[e]] = std::max(peak[segment[e]], va[e]);
  }
  Node n;
  n.op = Op::kSegmentSoftmax;
  n.inputs = {a.id};
  n.value = Matrix(va.rows(), va.cols());
  std::vector<double> total(segments, 0.0);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    n.value[e] = std::exp(va[e] - peak[segment[e]]);
    total[segment[e]] += n.value[e];
  }
  for (std::size_t e = 0; e < segment.size(); ++e) n.value[e] /= total[segment[e]];
  n.index_a = std::move(segment);
  n.scalar = static_cast<double>(segments);
  n.requires_grad = nodes_[a.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::weighted_neighbor_sum(Var weight, Var values, std::vector<std::size_t> src,
                                      std::vector<std::size_t> dst, std::size_t out_rows) {
  const Matrix& w = value(weight);
  const Matrix& v = value(values);
  if (src.size() != dst.size() || src.size() != w.size())
    throw ShapeError("tape weighted_neighbor_sum: edge list and weight length mismatch");
  Node n;
  n.op = Op::kWeightedNeighborSum;
  n.inputs = {weight.id, values.id};
  n.value = Matrix(out_rows, v.cols());
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= v.rows() || dst[e] >= out_rows) throw ShapeError("tape weighted_neighbor_sum: index out of range");
    const double we = w[e];
    for (std::size_t c = 0; c < v.cols(); ++c) n.value(dst[e], c) += we * v(src[e], c);
  }
  n.index_a = std::move(src);
  n.index_b = std::move(dst);
  n.requires_grad = nodes_[weight.id].requires_grad || nodes_[values.id].requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::focal_loss(Var p, double gamma) {
  const Matrix& vp = value(p);
  if (vp.rows() != 1 || vp.cols() != 1) throw ShapeError("tape focal_loss: expects a 1x1 probability");
  const double prob = vp[0];
  Node n;
  n.op = Op::kFocal;
  n.inputs = {p.id};
  n.scalar = gamma;
  n.value = Matrix(1, 1, -std::pow(1.0 - prob, gamma) * std::log(std::max(prob, kFocalFloor)));
  n.requires_grad = nodes_[p.id].requires_grad;
  return push(std::move(n));
}

void Tape::backward(Var out) {
  if (value(out).rows() != 1 || value(out).cols() != 1) throw ShapeError("tape backward: output must be 1x1");
  for (Node& n : nodes_) n.grad = Matrix();
  grad_slot(out.id) = Matrix(1, 1, 1.0);

  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty() || node.op == Op::kLeaf) continue;
    const Matrix g = node.grad;
    const auto& in = node.inputs;
    switch (node.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Matrix& a = nodes_[in[0]].value;
        const Matrix& b = nodes_[in[1]].value;
        if (nodes_[in[0]].requires_grad) accumulate(in[0], mrcgat::matmul_nt(g, b));
        if (nodes_[in[1]].requires_grad) accumulate(in[1], mrcgat::matmul_tn(a, g));
        break;
      }
      case Op::kMatmulNT: {
        const Matrix& a = nodes_[in[0]].value;
        const Matrix& b = nodes_[in[1]].value;
        if (nodes_[in[0]].requires_grad) accumulate(in[0], mrcgat::matmul(g, b));
        if (nodes_[in[1]].requires_grad) accumulate(in[1], mrcgat::matmul_tn(g, a));
        break;
      }
      case Op::kAdd:
        accumulate(in[0], g);
        accumulate(in[1], g);
        break;
      case Op::kAddRow: {
        accumulate(in[0], g);
        if (nodes_[in[1]].requires_grad) {
          Matrix col_sum(1, g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) col_sum(0, c) += g(r, c);
          accumulate(in[1], col_sum);
        }
        break;
      }
      case Op::kConcat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const Matrix& part = nodes_[in[k]].value;
          if (nodes_[in[k]].requires_grad) {
            Matrix piece(part.rows(), part.cols());
            for (std::size_t r = 0; r < part.rows(); ++r)
              for (std::size_t c = 0; c < part.cols(); ++c)
                piece(r, c) = node.axis == Axis::kCols ? g(r, offset + c) : g(offset + r, c);
            accumulate(in[k], piece);
          }
          offset += node.axis == Axis::kCols ? part.cols() : part.rows();
        }
        break;
      }
      case Op::kScale:
        accumulate(in[0], g * node.scalar);
        break;
      case Op::kLeakyRelu: {
        const Matrix& x = nodes_[in[0]].value;
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x[i] > 0.0 ? 1.0 : node.scalar;
        accumulate(in[0], d);
        break;
      }
      case Op::kElu: {
        const Matrix& x = nodes_[in[0]].value;
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x[i] > 0.0 ? 1.0 : std::exp(x[i]);
        accumulate(in[0], d);
        break;
      }
      case Op::kRelu: {
        const Matrix& x = nodes_[in[0]].value;
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x[i] > 0.0 ? 1.0 : 0.0;
        accumulate(in[0], d);
        break;
      }
      case Op::kLog: {
        const Matrix& x = nodes_[in[0]].value;
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
        accumulate(in[0], d);
        break;
      }
      case Op::kDropout: {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= node.aux[i];
        accumulate(in[0], d);
        break;
      }
      case Op::kGatherRows: {
        const Matrix& x = nodes_[in[0]].value;
        Matrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < node.index_a.size(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) d(node.index_a[r], c) += g(r, c);
        accumulate(in[0], d);
        break;
      }
      case Op::kSegmentSoftmax: {
        const Matrix& y = node.value;
        const auto segments = static_cast<std::size_t>(node.scalar);
        std::vector<double> dot(segments, 0.0);
        for (std::size_t e = 0; e < y.size(); ++e) dot[node.index_a[e]] += y[e] * g[e];
        Matrix d(y.rows(), y.cols());
        for (std::size_t e = 0; e < y.size(); ++e) d[e] = y[e] * (g[e] - dot[node.index_a[e]]);
        accumulate(in[0], d);
        break;
      }
      case Op::kWeightedNeighborSum: {
        const Matrix& w = nodes_[in[0]].value;
        const Matrix& v = nodes_[in[1]].value;
        const bool want_w = nodes_[in[0]].requires_grad;
        const bool want_v = nodes_[in[1]].requires_grad;
        Matrix dw(w.rows(), w.cols());
        Matrix dv(v.rows(), v.cols());
        for (std::size_t e = 0; e < node.index_a.size(); ++e) {
          const std::size_t s = node.index_a[e];
          const std::size_t t = node.index_b[e];
          double acc = 0.0;
          for (std::size_t c = 0; c < v.cols(); ++c) {
            acc += g(t, c) * v(s, c);
            if (want_v) dv(s, c) += w[e] * g(t, c);
          }
          dw[e] = acc;
        }
        if (want_w) accumulate(in[0], dw);
        if (want_v) accumulate(in[1], dv);
        break;
      }
      case Op::kFocal: {
        const double p = nodes_[in[0]].value[0];
        const double gamma = node.scalar;
        const double one_minus = 1.0 - p;
        double d = 0.0;
        if (p > kFocalFloor) {
          const double log_p = std::log(p);
          const double weight_term = (gamma == 0.0 || one_minus == 0.0)
                                         ? 0.0
                                         : gamma * std::pow(one_minus, gamma - 1.0) * log_p;
          d = weight_term - std::pow(one_minus, gamma) / p;
        } else if (gamma != 0.0) {
          d = gamma * std::pow(one_minus, gamma - 1.0) * std::log(kFocalFloor);
        }
        accumulate(in[0], Matrix(1, 1, g[0] * d));
        break;
      }
    }
  }
  for (Node& n : nodes_)
    if (n.requires_grad && n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
}

}  // namespace mrcgat
