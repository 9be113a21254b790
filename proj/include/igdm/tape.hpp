#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "igdm/matrix.hpp"
#include "igdm/sparse.hpp"

namespace igdm {

// Reverse-mode autodiff over DenseMatrix. Define-by-run: the tape is built
// fresh for every training step and discarded afterwards. Nodes are stored in
// construction order, which is a topological order by construction, and
// backward() visits each node exactly once in reverse.
class Tape {
 public:
  using NodeId = int;

  enum class Op {
    kLeaf,
    kMatMul,      // A * B
    kMatMulNT,    // A * B^T
    kSpMM,        // const sparse * A
    kAdd,
    kSub,
    kMul,         // elementwise
    kScalarMul,
    kAddColVec,   // broadcast column vector over all columns
    kConcatRows,
    kSliceRows,
    kGatherRows,
    kTanh,
    kSigmoid,
    kExp,
    kLog,
    kSumAll,      // 1x1
    kL2NormalizeRows,
    kSoftmaxRows,
    kRowLogSumExp,  // n x 1
  };

  NodeId leaf(DenseMatrix value, bool trainable = false) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.trainable = trainable;
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) {
    Node n = binary(Op::kMatMul, a, b);
    n.value = igdm::matmul(value(a), value(b));
    return push(std::move(n));
  }

  NodeId matmul_nt(NodeId a, NodeId b) {
    Node n = binary(Op::kMatMulNT, a, b);
    n.value = igdm::matmul_nt(value(a), value(b));
    return push(std::move(n));
  }

  NodeId spmm(const SparseCsc* s, NodeId x) {
    Node n = unary(Op::kSpMM, x);
    n.sparse = s;
    n.value = s->multiply(value(x));
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) {
    Node n = binary(Op::kAdd, a, b);
    n.value = igdm::add(value(a), value(b));
    return push(std::move(n));
  }

  NodeId sub(NodeId a, NodeId b) {
    Node n = binary(Op::kSub, a, b);
    n.value = igdm::sub(value(a), value(b));
    return push(std::move(n));
  }

  NodeId mul(NodeId a, NodeId b) {
    Node n = binary(Op::kMul, a, b);
    n.value = hadamard(value(a), value(b));
    return push(std::move(n));
  }

  NodeId scalar_mul(NodeId a, double s) {
    Node n = unary(Op::kScalarMul, a);
    n.scalar = s;
    n.value = scale(value(a), s);
    return push(std::move(n));
  }

  NodeId add_colvec(NodeId a, NodeId col) {
    const DenseMatrix& m = value(a);
    const DenseMatrix& v = value(col);
    if (v.cols() != 1 || v.rows() != m.rows()) {
      throw ContractError("add_colvec: shape mismatch " + m.shape_str() + " vs " + v.shape_str());
    }
    Node n = binary(Op::kAddColVec, a, col);
    n.value = m;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) n.value(i, j) += v(i, 0);
    return push(std::move(n));
  }

  NodeId concat_rows(NodeId a, NodeId b) {
    const DenseMatrix& ma = value(a);
    const DenseMatrix& mb = value(b);
    if (ma.cols() != mb.cols()) {
      throw ContractError("concat_rows: column mismatch " + ma.shape_str() + " vs " + mb.shape_str());
    }
    Node n = binary(Op::kConcatRows, a, b);
    n.value = DenseMatrix(ma.rows() + mb.rows(), ma.cols());
    for (int i = 0; i < ma.rows(); ++i)
      for (int j = 0; j < ma.cols(); ++j) n.value(i, j) = ma(i, j);
    for (int i = 0; i < mb.rows(); ++i)
      for (int j = 0; j < mb.cols(); ++j) n.value(ma.rows() + i, j) = mb(i, j);
    return push(std::move(n));
  }

  NodeId slice_rows(NodeId a, int begin, int count) {
    const DenseMatrix& m = value(a);
    if (begin < 0 || count < 0 || begin + count > m.rows()) {
      throw ContractError("slice_rows: range [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") outside " + m.shape_str());
    }
    Node n = unary(Op::kSliceRows, a);
    n.row_begin = begin;
    n.value = DenseMatrix(count, m.cols());
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < m.cols(); ++j) n.value(i, j) = m(begin + i, j);
    return push(std::move(n));
  }

  NodeId gather_rows(NodeId a, std::vector<int> rows) {
    const DenseMatrix& m = value(a);
    for (int r : rows) {
      if (r < 0 || r >= m.rows()) {
        throw ContractError("gather_rows: row " + std::to_string(r) + " outside " + m.shape_str());
      }
    }
    Node n = unary(Op::kGatherRows, a);
    n.value = DenseMatrix(static_cast<int>(rows.size()), m.cols());
    for (size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < m.cols(); ++j) n.value(static_cast<int>(i), j) = m(rows[i], j);
    n.rows = std::move(rows);
    return push(std::move(n));
  }

  NodeId tanh(NodeId a) { return elementwise(Op::kTanh, a, [](double x) { return std::tanh(x); }); }

  NodeId sigmoid(NodeId a) {
    return elementwise(Op::kSigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  }

  NodeId exp(NodeId a) { return elementwise(Op::kExp, a, [](double x) { return std::exp(x); }); }

  NodeId log(NodeId a) { return elementwise(Op::kLog, a, [](double x) { return std::log(x); }); }

  NodeId sum_all(NodeId a) {
    Node n = unary(Op::kSumAll, a);
    n.value = DenseMatrix(1, 1);
    n.value(0, 0) = igdm::sum_all(value(a));
    return push(std::move(n));
  }

  // Rows scaled to unit L2 norm; zero rows stay zero (their count is kept for
  // diagnostics).
  NodeId l2_normalize_rows(NodeId a) {
    const DenseMatrix& m = value(a);
    Node n = unary(Op::kL2NormalizeRows, a);
    n.value = m;
    n.norms.resize(m.rows());
    for (int i = 0; i < m.rows(); ++i) {
      const double norm = row_norm(m, i);
      n.norms[i] = norm;
      if (norm > 0.0) {
        for (int j = 0; j < m.cols(); ++j) n.value(i, j) /= norm;
      } else {
        ++zero_norm_rows_;
      }
    }
    return push(std::move(n));
  }

  NodeId softmax_rows(NodeId a) {
    const DenseMatrix& m = value(a);
    Node n = unary(Op::kSoftmaxRows, a);
    n.value = DenseMatrix(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
      double mx = m(i, 0);
      for (int j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
      double denom = 0.0;
      for (int j = 0; j < m.cols(); ++j) denom += std::exp(m(i, j) - mx);
      for (int j = 0; j < m.cols(); ++j) n.value(i, j) = std::exp(m(i, j) - mx) / denom;
    }
    return push(std::move(n));
  }

  NodeId row_logsumexp(NodeId a) {
    const DenseMatrix& m = value(a);
    Node n = unary(Op::kRowLogSumExp, a);
    n.value = DenseMatrix(m.rows(), 1);
    for (int i = 0; i < m.rows(); ++i) {
      double mx = m(i, 0);
      for (int j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
      double s = 0.0;
      for (int j = 0; j < m.cols(); ++j) s += std::exp(m(i, j) - mx);
      n.value(i, 0) = mx + std::log(s);
    }
    return push(std::move(n));
  }

  const DenseMatrix& value(NodeId id) const { return nodes_[id].value; }
  const DenseMatrix& grad(NodeId id) const { return grads_[id]; }
  bool trainable(NodeId id) const { return nodes_[id].trainable; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int zero_norm_rows() const { return zero_norm_rows_; }

  // Reverse sweep from a scalar loss. Every node at or below the loss is
  // visited exactly once; leaves not reachable from the loss end with zero
  // gradient.
  void backward(NodeId loss) {
    const DenseMatrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be a 1x1 scalar node, got " + lv.shape_str());
    }
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.emplace_back(n.value.rows(), n.value.cols());
    grads_[loss](0, 0) = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
      const Node& n = nodes_[id];
      const DenseMatrix& g = grads_[id];
      switch (n.op) {
        case Op::kLeaf:
          break;
        case Op::kMatMul:
          accumulate(n.a, igdm::matmul_nt(g, nodes_[n.b].value));
          accumulate(n.b, igdm::matmul_tn(nodes_[n.a].value, g));
          break;
        case Op::kMatMulNT:
          accumulate(n.a, igdm::matmul(g, nodes_[n.b].value));
          accumulate(n.b, igdm::matmul_tn(g, nodes_[n.a].value));
          break;
        case Op::kSpMM:
          accumulate(n.a, n.sparse->multiply_transpose(g));
          break;
        case Op::kAdd:
          accumulate(n.a, g);
          accumulate(n.b, g);
          break;
        case Op::kSub:
          accumulate(n.a, g);
          accumulate(n.b, scale(g, -1.0));
          break;
        case Op::kMul:
          accumulate(n.a, hadamard(g, nodes_[n.b].value));
          accumulate(n.b, hadamard(g, nodes_[n.a].value));
          break;
        case Op::kScalarMul:
          accumulate(n.a, scale(g, n.scalar));
          break;
        case Op::kAddColVec: {
          accumulate(n.a, g);
          DenseMatrix dv(g.rows(), 1);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) dv(i, 0) += g(i, j);
          accumulate(n.b, dv);
          break;
        }
        case Op::kConcatRows: {
          const int ra = nodes_[n.a].value.rows();
          DenseMatrix da(ra, g.cols());
          DenseMatrix db(g.rows() - ra, g.cols());
          for (int i = 0; i < ra; ++i)
            for (int j = 0; j < g.cols(); ++j) da(i, j) = g(i, j);
          for (int i = ra; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) db(i - ra, j) = g(i, j);
          accumulate(n.a, da);
          accumulate(n.b, db);
          break;
        }
        case Op::kSliceRows: {
          DenseMatrix& da = grads_[n.a];
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) da(n.row_begin + i, j) += g(i, j);
          break;
        }
        case Op::kGatherRows: {
          DenseMatrix& da = grads_[n.a];
          for (size_t i = 0; i < n.rows.size(); ++i)
            for (int j = 0; j < g.cols(); ++j) da(n.rows[i], j) += g(static_cast<int>(i), j);
          break;
        }
        case Op::kTanh: {
          DenseMatrix da = g;
          for (size_t i = 0; i < da.size(); ++i) {
            const double y = n.value.data()[i];
            da.data()[i] *= 1.0 - y * y;
          }
          accumulate(n.a, da);
          break;
        }
        case Op::kSigmoid: {
          DenseMatrix da = g;
          for (size_t i = 0; i < da.size(); ++i) {
            const double y = n.value.data()[i];
            da.data()[i] *= y * (1.0 - y);
          }
          accumulate(n.a, da);
          break;
        }
        case Op::kExp: {
          DenseMatrix da = g;
          for (size_t i = 0; i < da.size(); ++i) da.data()[i] *= n.value.data()[i];
          accumulate(n.a, da);
          break;
        }
        case Op::kLog: {
          DenseMatrix da = g;
          const DenseMatrix& x = nodes_[n.a].value;
          for (size_t i = 0; i < da.size(); ++i) da.data()[i] /= x.data()[i];
          accumulate(n.a, da);
          break;
        }
        case Op::kSumAll: {
          DenseMatrix& da = grads_[n.a];
          const double gs = g(0, 0);
          for (double& v : da.data()) v += gs;
          break;
        }
        case Op::kL2NormalizeRows: {
          const DenseMatrix& y = n.value;
          DenseMatrix da(y.rows(), y.cols());
          for (int i = 0; i < y.rows(); ++i) {
            const double norm = n.norms[i];
            if (norm == 0.0) continue;
            double ydg = 0.0;
            for (int j = 0; j < y.cols(); ++j) ydg += y(i, j) * g(i, j);
            for (int j = 0; j < y.cols(); ++j) da(i, j) = (g(i, j) - y(i, j) * ydg) / norm;
          }
          accumulate(n.a, da);
          break;
        }
        case Op::kSoftmaxRows: {
          const DenseMatrix& y = n.value;
          DenseMatrix da(y.rows(), y.cols());
          for (int i = 0; i < y.rows(); ++i) {
            double gy = 0.0;
            for (int j = 0; j < y.cols(); ++j) gy += g(i, j) * y(i, j);
            for (int j = 0; j < y.cols(); ++j) da(i, j) = y(i, j) * (g(i, j) - gy);
          }
          accumulate(n.a, da);
          break;
        }
        case Op::kRowLogSumExp: {
          const DenseMatrix& x = nodes_[n.a].value;
          DenseMatrix da(x.rows(), x.cols());
          for (int i = 0; i < x.rows(); ++i) {
            const double gi = g(i, 0);
            if (gi == 0.0) continue;
            for (int j = 0; j < x.cols(); ++j) da(i, j) = std::exp(x(i, j) - n.value(i, 0)) * gi;
          }
          accumulate(n.a, da);
          break;
        }
      }
    }
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    NodeId a = -1;
    NodeId b = -1;
    DenseMatrix value;
    bool trainable = false;
    double scalar = 0.0;
    int row_begin = 0;
    std::vector<int> rows;
    std::vector<double> norms;
    const SparseCsc* sparse = nullptr;
  };

  Node unary(Op op, NodeId a) {
    check_id(a);
    Node n;
    n.op = op;
    n.a = a;
    return n;
  }

  Node binary(Op op, NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return n;
  }

  void check_id(NodeId id) const {
    if (id < 0 || id >= size()) {
      throw ContractError("tape: node id " + std::to_string(id) + " out of range");
    }
  }

  template <typename F>
  NodeId elementwise(Op op, NodeId a, F f) {
    Node n = unary(op, a);
    n.value = value(a);
    for (double& v : n.value.data()) v = f(v);
    return push(std::move(n));
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void accumulate(NodeId id, const DenseMatrix& g) {
    DenseMatrix& dst = grads_[id];
    for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i];
  }

  std::vector<Node> nodes_;
  std::vector<DenseMatrix> grads_;
  int zero_norm_rows_ = 0;
};

}  // namespace igdm
