#pragma once
// Dense rank-2 tensors (64-bit floats, row-major) plus a reverse-mode tape.
// The tape is rebuilt for every forward pass; backward() walks the recorded
// nodes in reverse creation order and accumulates gradients into any
// parameter tensors that were registered as grad-receiving leaves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufrec {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on first use

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), val(static_cast<size_t>(r) * c, 0.0) {}

  size_t size() const { return static_cast<size_t>(rows) * cols; }
  double& at(int r, int c) { return val[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return val[static_cast<size_t>(r) * cols + c]; }

  void ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(size(), 0.0);
  }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

inline void check_same_shape(const char* op, int ar, int ac, int br, int bc) {
  if (ar != br || ac != bc) {
    throw std::runtime_error(std::string(op) + ": shape mismatch [" + std::to_string(ar) + "x" +
                             std::to_string(ac) + "] vs [" + std::to_string(br) + "x" +
                             std::to_string(bc) + "]");
  }
}

// Node handle into a Tape. Plain int keeps call sites terse.
using NodeId = int;

class Tape {
 public:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;  // empty for constants
  };

  std::vector<Node> nodes;

  void clear() { nodes.clear(); }

  int rows(NodeId a) const { return nodes[a].rows; }
  int cols(NodeId a) const { return nodes[a].cols; }
  const std::vector<double>& val(NodeId a) const { return nodes[a].val; }
  std::vector<double>& grad(NodeId a) { return nodes[a].grad; }
  double scalar(NodeId a) const {
    if (nodes[a].rows != 1 || nodes[a].cols != 1)
      throw std::runtime_error("scalar(): node is " + shape_str(a));
    return nodes[a].val[0];
  }
  std::string shape_str(NodeId a) const {
    return "[" + std::to_string(nodes[a].rows) + "x" + std::to_string(nodes[a].cols) + "]";
  }

  NodeId constant(int r, int c, std::vector<double> v) {
    if (v.size() != static_cast<size_t>(r) * c) throw std::runtime_error("constant: bad payload size");
    return push(r, c, std::move(v), nullptr);
  }
  NodeId zeros(int r, int c) { return push(r, c, std::vector<double>(static_cast<size_t>(r) * c, 0.0), nullptr); }

  // Leaf over a parameter tensor; gradients flow back into t.grad.
  NodeId leaf(Tensor& t) {
    NodeId id = push(t.rows, t.cols, t.val, nullptr);
    Tensor* tp = &t;
    nodes[id].back = [id, tp](Tape& tape) {
      tp->ensure_grad();
      const auto& g = tape.nodes[id].grad;
      for (size_t i = 0; i < g.size(); ++i) tp->grad[i] += g[i];
    };
    return id;
  }

  // Leaf over a frozen tensor: values participate in the forward/backward
  // chain, the tensor itself receives no gradient.
  NodeId frozen(const Tensor& t) { return push(t.rows, t.cols, t.val, nullptr); }

  // Row lookup. ids equal to `sentinel` produce an all-zero row and receive
  // no gradient; every other id must index a valid row of `table`.
  NodeId embedding(Tensor& table, const std::vector<int>& ids, int sentinel = 0,
                   bool push_grad = true) {
    const int n = static_cast<int>(ids.size());
    const int d = table.cols;
    std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      int id = ids[i];
      if (id == sentinel || id < 0) continue;
      if (id >= table.rows)
        throw std::runtime_error("embedding: id " + std::to_string(id) + " out of range for " +
                                 table.shape_str());
      const double* src = &table.val[static_cast<size_t>(id) * d];
      std::copy(src, src + d, &out[static_cast<size_t>(i) * d]);
    }
    NodeId id = push(n, d, std::move(out), nullptr);
    if (push_grad) {
      Tensor* tp = &table;
      std::vector<int> idc = ids;
      nodes[id].back = [id, tp, idc, sentinel, d](Tape& tape) {
        tp->ensure_grad();
        const auto& g = tape.nodes[id].grad;
        for (size_t i = 0; i < idc.size(); ++i) {
          int row = idc[i];
          if (row == sentinel || row < 0) continue;
          double* dst = &tp->grad[static_cast<size_t>(row) * d];
          const double* src = &g[i * d];
          for (int k = 0; k < d; ++k) dst[k] += src[k];
        }
      };
    }
    return id;
  }

  NodeId add(NodeId a, NodeId b) {
    check_same_shape("add", rows(a), cols(a), rows(b), cols(b));
    std::vector<double> out(nodes[a].val);
    for (size_t i = 0; i < out.size(); ++i) out[i] += nodes[b].val[i];
    NodeId id = push(rows(a), cols(a), std::move(out), nullptr);
    nodes[id].back = [id, a, b](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        t.nodes[a].grad[i] += g[i];
        t.nodes[b].grad[i] += g[i];
      }
    };
    return id;
  }

  NodeId sub(NodeId a, NodeId b) {
    check_same_shape("sub", rows(a), cols(a), rows(b), cols(b));
    std::vector<double> out(nodes[a].val);
    for (size_t i = 0; i < out.size(); ++i) out[i] -= nodes[b].val[i];
    NodeId id = push(rows(a), cols(a), std::move(out), nullptr);
    nodes[id].back = [id, a, b](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        t.nodes[a].grad[i] += g[i];
        t.nodes[b].grad[i] -= g[i];
      }
    };
    return id;
  }

  NodeId scale(NodeId a, double c) {
    std::vector<double> out(nodes[a].val);
    for (double& x : out) x *= c;
    NodeId id = push(rows(a), cols(a), std::move(out), nullptr);
    nodes[id].back = [id, a, c](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (size_t i = 0; i < g.size(); ++i) t.nodes[a].grad[i] += c * g[i];
    };
    return id;
  }

  // out = s * a where s is a 1x1 node; gradient reaches both operands.
  NodeId scale_by(NodeId a, NodeId s) {
    if (rows(s) != 1 || cols(s) != 1) throw std::runtime_error("scale_by: scalar operand is " + shape_str(s));
    const double sv = nodes[s].val[0];
    std::vector<double> out(nodes[a].val);
    for (double& x : out) x *= sv;
    NodeId id = push(rows(a), cols(a), std::move(out), nullptr);
    nodes[id].back = [id, a, s, sv](Tape& t) {
      const auto& g = t.nodes[id].grad;
      double acc = 0.0;
      for (size_t i = 0; i < g.size(); ++i) {
        t.nodes[a].grad[i] += sv * g[i];
        acc += t.nodes[a].val[i] * g[i];
      }
      t.nodes[s].grad[0] += acc;
    };
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    if (cols(a) != rows(b))
      throw std::runtime_error("matmul: inner dims differ " + shape_str(a) + " vs " + shape_str(b));
    const int R = rows(a), K = cols(a), C = cols(b);
    std::vector<double> out(static_cast<size_t>(R) * C, 0.0);
    const auto& A = nodes[a].val;
    const auto& B = nodes[b].val;
    for (int r = 0; r < R; ++r)
      for (int k = 0; k < K; ++k) {
        const double av = A[static_cast<size_t>(r) * K + k];
        if (av == 0.0) continue;
        const double* brow = &B[static_cast<size_t>(k) * C];
        double* orow = &out[static_cast<size_t>(r) * C];
        for (int c = 0; c < C; ++c) orow[c] += av * brow[c];
      }
    NodeId id = push(R, C, std::move(out), nullptr);
    nodes[id].back = [id, a, b, R, K, C](Tape& t) {
      const auto& g = t.nodes[id].grad;
      const auto& A = t.nodes[a].val;
      const auto& B = t.nodes[b].val;
      auto& dA = t.nodes[a].grad;
      auto& dB = t.nodes[b].grad;
      for (int r = 0; r < R; ++r)
        for (int k = 0; k < K; ++k) {
          const double* brow = &B[static_cast<size_t>(k) * C];
          const double* grow = &g[static_cast<size_t>(r) * C];
          double acc = 0.0;
          for (int c = 0; c < C; ++c) acc += grow[c] * brow[c];
          dA[static_cast<size_t>(r) * K + k] += acc;
        }
      for (int k = 0; k < K; ++k)
        for (int r = 0; r < R; ++r) {
          const double av = A[static_cast<size_t>(r) * K + k];
          if (av == 0.0) continue;
          const double* grow = &g[static_cast<size_t>(r) * C];
          double* drow = &dB[static_cast<size_t>(k) * C];
          for (int c = 0; c < C; ++c) drow[c] += av * grow[c];
        }
    };
    return id;
  }

  // out = a * b^T ; a is RxK, b is CxK.
  NodeId matmul_nt(NodeId a, NodeId b) {
    if (cols(a) != cols(b))
      throw std::runtime_error("matmul_nt: inner dims differ " + shape_str(a) + " vs " + shape_str(b));
    const int R = rows(a), K = cols(a), C = rows(b);
    std::vector<double> out(static_cast<size_t>(R) * C, 0.0);
    const auto& A = nodes[a].val;
    const auto& B = nodes[b].val;
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        const double* arow = &A[static_cast<size_t>(r) * K];
        const double* brow = &B[static_cast<size_t>(c) * K];
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
        out[static_cast<size_t>(r) * C + c] = acc;
      }
    NodeId id = push(R, C, std::move(out), nullptr);
    nodes[id].back = [id, a, b, R, K, C](Tape& t) {
      const auto& g = t.nodes[id].grad;
      const auto& A = t.nodes[a].val;
      const auto& B = t.nodes[b].val;
      auto& dA = t.nodes[a].grad;
      auto& dB = t.nodes[b].grad;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
          const double gv = g[static_cast<size_t>(r) * C + c];
          if (gv == 0.0) continue;
          const double* brow = &B[static_cast<size_t>(c) * K];
          const double* arow = &A[static_cast<size_t>(r) * K];
          double* darow = &dA[static_cast<size_t>(r) * K];
          double* dbrow = &dB[static_cast<size_t>(c) * K];
          for (int k = 0; k < K; ++k) {
            darow[k] += gv * brow[k];
            dbrow[k] += gv * arow[k];
          }
        }
    };
    return id;
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    if (rows(a) != rows(b))
      throw std::runtime_error("concat_cols: row counts differ " + shape_str(a) + " vs " + shape_str(b));
    const int R = rows(a), Ca = cols(a), Cb = cols(b);
    std::vector<double> out(static_cast<size_t>(R) * (Ca + Cb));
    for (int r = 0; r < R; ++r) {
      std::copy(&nodes[a].val[static_cast<size_t>(r) * Ca], &nodes[a].val[static_cast<size_t>(r) * Ca] + Ca,
                &out[static_cast<size_t>(r) * (Ca + Cb)]);
      std::copy(&nodes[b].val[static_cast<size_t>(r) * Cb], &nodes[b].val[static_cast<size_t>(r) * Cb] + Cb,
                &out[static_cast<size_t>(r) * (Ca + Cb) + Ca]);
    }
    NodeId id = push(R, Ca + Cb, std::move(out), nullptr);
    nodes[id].back = [id, a, b, R, Ca, Cb](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int r = 0; r < R; ++r) {
        for (int c = 0; c < Ca; ++c)
          t.nodes[a].grad[static_cast<size_t>(r) * Ca + c] += g[static_cast<size_t>(r) * (Ca + Cb) + c];
        for (int c = 0; c < Cb; ++c)
          t.nodes[b].grad[static_cast<size_t>(r) * Cb + c] += g[static_cast<size_t>(r) * (Ca + Cb) + Ca + c];
      }
    };
    return id;
  }

  NodeId slice_cols(NodeId a, int c0, int c1) {
    const int R = rows(a), C = cols(a);
    if (c0 < 0 || c1 > C || c0 >= c1) throw std::runtime_error("slice_cols: bad range on " + shape_str(a));
    const int W = c1 - c0;
    std::vector<double> out(static_cast<size_t>(R) * W);
    for (int r = 0; r < R; ++r)
      std::copy(&nodes[a].val[static_cast<size_t>(r) * C + c0],
                &nodes[a].val[static_cast<size_t>(r) * C + c0] + W, &out[static_cast<size_t>(r) * W]);
    NodeId id = push(R, W, std::move(out), nullptr);
    nodes[id].back = [id, a, R, C, c0, W](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < W; ++c)
          t.nodes[a].grad[static_cast<size_t>(r) * C + c0 + c] += g[static_cast<size_t>(r) * W + c];
    };
    return id;
  }

  NodeId row(NodeId a, int r) {
    const int C = cols(a);
    if (r < 0 || r >= rows(a)) throw std::runtime_error("row: index out of range on " + shape_str(a));
    std::vector<double> out(&nodes[a].val[static_cast<size_t>(r) * C],
                            &nodes[a].val[static_cast<size_t>(r) * C] + C);
    NodeId id = push(1, C, std::move(out), nullptr);
    nodes[id].back = [id, a, r, C](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int c = 0; c < C; ++c) t.nodes[a].grad[static_cast<size_t>(r) * C + c] += g[c];
    };
    return id;
  }

  NodeId repeat_row(NodeId a, int n) {
    if (rows(a) != 1) throw std::runtime_error("repeat_row: operand is " + shape_str(a));
    const int C = cols(a);
    std::vector<double> out(static_cast<size_t>(n) * C);
    for (int r = 0; r < n; ++r) std::copy(nodes[a].val.begin(), nodes[a].val.end(), &out[static_cast<size_t>(r) * C]);
    NodeId id = push(n, C, std::move(out), nullptr);
    nodes[id].back = [id, a, n, C](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < C; ++c) t.nodes[a].grad[c] += g[static_cast<size_t>(r) * C + c];
    };
    return id;
  }

  NodeId add_rowvec(NodeId a, NodeId b) {
    if (rows(b) != 1 || cols(b) != cols(a))
      throw std::runtime_error("add_rowvec: " + shape_str(a) + " vs " + shape_str(b));
    const int R = rows(a), C = cols(a);
    std::vector<double> out(nodes[a].val);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) out[static_cast<size_t>(r) * C + c] += nodes[b].val[c];
    NodeId id = push(R, C, std::move(out), nullptr);
    nodes[id].back = [id, a, b, R, C](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
          t.nodes[a].grad[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(r) * C + c];
          t.nodes[b].grad[c] += g[static_cast<size_t>(r) * C + c];
        }
    };
    return id;
  }

  NodeId relu(NodeId a) {
    std::vector<double> out(nodes[a].val);
    for (double& x : out)
      if (x < 0.0) x = 0.0;
    NodeId id = push(rows(a), cols(a), std::move(out), nullptr);
    nodes[id].back = [id, a](Tape& t) {
      const auto& g = t.nodes[id].grad;
      const auto& x = t.nodes[a].val;
      for (size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) t.nodes[a].grad[i] += g[i];
    };
    return id;
  }

  // Row-wise softmax. `allow`, when given, has one flag per element; slots
  // with allow==0 get probability exactly 0. A fully masked row yields an
  // all-zero row.
  NodeId softmax_rows(NodeId a, const std::vector<uint8_t>* allow = nullptr) {
    const int R = rows(a), C = cols(a);
    if (allow && allow->size() != static_cast<size_t>(R) * C)
      throw std::runtime_error("softmax_rows: mask size mismatch on " + shape_str(a));
    std::vector<double> out(static_cast<size_t>(R) * C, 0.0);
    const auto& x = nodes[a].val;
    for (int r = 0; r < R; ++r) {
      const size_t off = static_cast<size_t>(r) * C;
      double m = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < C; ++c)
        if ((!allow || (*allow)[off + c]) && x[off + c] > m) m = x[off + c];
      if (m == -std::numeric_limits<double>::infinity()) continue;  // fully masked
      double z = 0.0;
      for (int c = 0; c < C; ++c)
        if (!allow || (*allow)[off + c]) {
          out[off + c] = std::exp(x[off + c] - m);
          z += out[off + c];
        }
      for (int c = 0; c < C; ++c) out[off + c] /= z;
    }
    NodeId id = push(R, C, std::move(out), nullptr);
    std::vector<uint8_t> allow_copy = allow ? *allow : std::vector<uint8_t>();
    nodes[id].back = [id, a, R, C, allow_copy](Tape& t) {
      const auto& g = t.nodes[id].grad;
      const auto& y = t.nodes[id].val;
      const bool masked = !allow_copy.empty();
      for (int r = 0; r < R; ++r) {
        const size_t off = static_cast<size_t>(r) * C;
        double s = 0.0;
        for (int c = 0; c < C; ++c)
          if (!masked || allow_copy[off + c]) s += g[off + c] * y[off + c];
        for (int c = 0; c < C; ++c)
          if (!masked || allow_copy[off + c])
            t.nodes[a].grad[off + c] += y[off + c] * (g[off + c] - s);
      }
    };
    return id;
  }

  NodeId mask_rows(NodeId a, const std::vector<uint8_t>& keep) {
    const int R = rows(a), C = cols(a);
    if (keep.size() != static_cast<size_t>(R)) throw std::runtime_error("mask_rows: mask size mismatch");
    std::vector<double> out(nodes[a].val);
    for (int r = 0; r < R; ++r)
      if (!keep[r]) std::fill(&out[static_cast<size_t>(r) * C], &out[static_cast<size_t>(r) * C] + C, 0.0);
    NodeId id = push(R, C, std::move(out), nullptr);
    std::vector<uint8_t> keep_copy = keep;
    nodes[id].back = [id, a, R, C, keep_copy](Tape& t) {
      const auto& g = t.nodes[id].grad;
      for (int r = 0; r < R; ++r) {
        if (!keep_copy[r]) continue;
        for (int c = 0; c < C; ++c)
          t.nodes[a].grad[static_cast<size_t>(r) * C + c] += g[static_cast<size_t>(r) * C + c];
      }
    };
    return id;
  }

  NodeId layer_norm(NodeId a, NodeId gamma, NodeId beta, double eps = 1e-5) {
    const int R = rows(a), C = cols(a);
    if (rows(gamma) != 1 || cols(gamma) != C || rows(beta) != 1 || cols(beta) != C)
      throw std::runtime_error("layer_norm: affine params must be [1x" + std::to_string(C) + "]");
    std::vector<double> out(static_cast<size_t>(R) * C);
    std::vector<double> inv_sd(R), mu(R);
    const auto& x = nodes[a].val;
    for (int r = 0; r < R; ++r) {
      const size_t off = static_cast<size_t>(r) * C;
      double m = 0.0;
      for (int c = 0; c < C; ++c) m += x[off + c];
      m /= C;
      double v = 0.0;
      for (int c = 0; c < C; ++c) v += (x[off + c] - m) * (x[off + c] - m);
      v /= C;
      mu[r] = m;
      inv_sd[r] = 1.0 / std::sqrt(v + eps);
      for (int c = 0; c < C; ++c)
        out[off + c] = nodes[gamma].val[c] * (x[off + c] - m) * inv_sd[r] + nodes[beta].val[c];
    }
    NodeId id = push(R, C, std::move(out), nullptr);
    nodes[id].back = [id, a, gamma, beta, R, C, mu, inv_sd](Tape& t) {
      const auto& g = t.nodes[id].grad;
      const auto& x = t.nodes[a].val;
      for (int r = 0; r < R; ++r) {
        const size_t off = static_cast<size_t>(r) * C;
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int c = 0; c < C; ++c) {
          const double xh = (x[off + c] - mu[r]) * inv_sd[r];
          const double dxh = g[off + c] * t.nodes[gamma].val[c];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
          t.nodes[gamma].grad[c] += g[off + c] * xh;
          t.nodes[beta].grad[c] += g[off + c];
        }
        for (int c = 0; c < C; ++c) {
          const double xh = (x[off + c] - mu[r]) * inv_sd[r];
          const double dxh = g[off + c] * t.nodes[gamma].val[c];
          t.nodes[a].grad[off + c] += inv_sd[r] * (dxh - sum_dxh / C - xh * sum_dxh_xh / C);
        }
      }
    };
    return id;
  }

  NodeId sum(NodeId a) {
    double s = 0.0;
    for (double x : nodes[a].val) s += x;
    NodeId id = push(1, 1, {s}, nullptr);
    nodes[id].back = [id, a](Tape& t) {
      const double g = t.nodes[id].grad[0];
      for (double& d : t.nodes[a].grad) d += g;
    };
    return id;
  }

  NodeId dot(NodeId a, NodeId b) {
    check_same_shape("dot", rows(a), cols(a), rows(b), cols(b));
    double s = 0.0;
    for (size_t i = 0; i < nodes[a].val.size(); ++i) s += nodes[a].val[i] * nodes[b].val[i];
    NodeId id = push(1, 1, {s}, nullptr);
    nodes[id].back = [id, a, b](Tape& t) {
      const double g = t.nodes[id].grad[0];
      for (size_t i = 0; i < t.nodes[a].val.size(); ++i) {
        t.nodes[a].grad[i] += g * t.nodes[b].val[i];
        t.nodes[b].grad[i] += g * t.nodes[a].val[i];
      }
    };
    return id;
  }

  // ||a - b||^2 summed over all elements.
  NodeId sq_diff_sum(NodeId a, NodeId b) {
    check_same_shape("sq_diff_sum", rows(a), cols(a), rows(b), cols(b));
    double s = 0.0;
    for (size_t i = 0; i < nodes[a].val.size(); ++i) {
      const double d = nodes[a].val[i] - nodes[b].val[i];
      s += d * d;
    }
    NodeId id = push(1, 1, {s}, nullptr);
    nodes[id].back = [id, a, b](Tape& t) {
      const double g = t.nodes[id].grad[0];
      for (size_t i = 0; i < t.nodes[a].val.size(); ++i) {
        const double d = t.nodes[a].val[i] - t.nodes[b].val[i];
        t.nodes[a].grad[i] += 2.0 * g * d;
        t.nodes[b].grad[i] -= 2.0 * g * d;
      }
    };
    return id;
  }

  NodeId sqnorm(NodeId a) {
    double s = 0.0;
    for (double x : nodes[a].val) s += x * x;
    NodeId id = push(1, 1, {s}, nullptr);
    nodes[id].back = [id, a](Tape& t) {
      const double g = t.nodes[id].grad[0];
      for (size_t i = 0; i < t.nodes[a].val.size(); ++i)
        t.nodes[a].grad[i] += 2.0 * g * t.nodes[a].val[i];
    };
    return id;
  }

  NodeId mse(NodeId a, NodeId b) {
    NodeId s = sq_diff_sum(a, b);
    return scale(s, 1.0 / (static_cast<double>(rows(a)) * cols(a)));
  }

  NodeId entry(NodeId a, int idx) {
    if (idx < 0 || idx >= static_cast<int>(nodes[a].val.size()))
      throw std::runtime_error("entry: index out of range on " + shape_str(a));
    NodeId id = push(1, 1, {nodes[a].val[idx]}, nullptr);
    nodes[id].back = [id, a, idx](Tape& t) { t.nodes[a].grad[idx] += t.nodes[id].grad[0]; };
    return id;
  }

  // Numerically stable cross entropy of a 1xC logit row against `target`.
  NodeId cross_entropy_logits(NodeId logits, int target) {
    if (rows(logits) != 1) throw std::runtime_error("cross_entropy_logits: logits are " + shape_str(logits));
    const int C = cols(logits);
    if (target < 0 || target >= C) throw std::runtime_error("cross_entropy_logits: bad target index");
    const auto& x = nodes[logits].val;
    double m = x[0];
    for (int c = 1; c < C; ++c) m = std::max(m, x[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(x[c] - m);
    const double loss = m + std::log(z) - x[target];
    NodeId id = push(1, 1, {loss}, nullptr);
    nodes[id].back = [id, logits, target, C, m, z](Tape& t) {
      const double g = t.nodes[id].grad[0];
      const auto& x = t.nodes[logits].val;
      for (int c = 0; c < C; ++c) {
        const double p = std::exp(x[c] - m) / z;
        t.nodes[logits].grad[c] += g * (p - (c == target ? 1.0 : 0.0));
      }
    };
    return id;
  }

  // Sum of c_i * x_i over scalar nodes; used to assemble composite losses.
  NodeId weighted_sum(const std::vector<NodeId>& ids, const std::vector<double>& coeffs) {
    if (ids.size() != coeffs.size()) throw std::runtime_error("weighted_sum: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) s += coeffs[i] * scalar(ids[i]);
    NodeId id = push(1, 1, {s}, nullptr);
    std::vector<NodeId> idc = ids;
    std::vector<double> cc = coeffs;
    nodes[id].back = [id, idc, cc](Tape& t) {
      const double g = t.nodes[id].grad[0];
      for (size_t i = 0; i < idc.size(); ++i) t.nodes[idc[i]].grad[0] += cc[i] * g;
    };
    return id;
  }

  // Reverse sweep from a scalar loss. Repeated calls (across tapes) keep
  // accumulating into parameter gradients.
  void backward(NodeId loss) {
    if (nodes[loss].rows != 1 || nodes[loss].cols != 1)
      throw std::runtime_error("backward: loss must be scalar, got " + shape_str(loss));
    if (!std::isfinite(nodes[loss].val[0]))
      throw std::runtime_error("backward: non-finite loss value");
    nodes[loss].grad[0] = 1.0;
    for (int i = loss; i >= 0; --i)
      if (nodes[i].back) nodes[i].back(*this);
  }

 private:
  NodeId push(int r, int c, std::vector<double> v, std::function<void(Tape&)> back) {
    Node n;
    n.rows = r;
    n.cols = c;
    n.val = std::move(v);
    n.grad.assign(static_cast<size_t>(r) * c, 0.0);
    n.back = std::move(back);
    nodes.push_back(std::move(n));
    return static_cast<NodeId>(nodes.size()) - 1;
  }
};

}  // namespace ufrec
