#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace seqprior {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A named trainable array with its gradient buffer and Adam moments.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        adam_m(Matrix::Zero(value.rows(), value.cols())),
        adam_v(Matrix::Zero(value.rows(), value.cols())) {}
};

namespace ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool needs_grad() const;
};

/// Records a computation over dense matrices for one reverse sweep.
///
/// Nodes are appended in evaluation order, so the reverse sweep is a simple
/// backwards loop. Gradients of nodes bound with `param` are added into the
/// owning Param::grad when `backward` finishes.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  Var param(Param& p, bool trainable = true);

  Var push(Matrix value, bool needs_grad, Backward back);

  void backward(Var loss);

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient of node `id` (allocating on first use).
  template <class Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
    Param* param = nullptr;
    const Matrix* external = nullptr;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline const Matrix& Var::grad() const { return tape->grad(id); }
inline bool Var::needs_grad() const { return tape->needs_grad(id); }

// Linear algebra.
Var matmul(Var a, Var b);
Var add_bias(Var x, Var bias);  // bias is 1 x cols, added to every row
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var min(Var a, Var b);  // elementwise, ties route the gradient to `a`

// Pointwise nonlinearities.
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var softplus(Var x);
Var square(Var x);
Var gelu(Var x);
Var clamp(Var x, double lo, double hi);

// Reductions and reshaping.
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);  // rows x 1
Var cols(Var x, Eigen::Index start, Eigen::Index n);
Var rows(Var x, Eigen::Index start, Eigen::Index n);
Var concat_cols(Var a, Var b);
Var gather_rows(Var x, const std::vector<int>& index);
/// Adds the first `period` rows of `table` to each consecutive block of `period` rows of `x`.
Var add_tiled(Var x, Var table, Eigen::Index period);

// Blocks.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Multi-head causal self attention over `batch` sequences of `seq_len` rows each.
/// `qkv` is (batch*seq_len) x (3*width); the result is (batch*seq_len) x width.
Var causal_attention(Var qkv, Eigen::Index batch, Eigen::Index seq_len, int heads);
Var dropout(Var x, double p, std::mt19937_64& rng);

}  // namespace ad
}  // namespace seqprior
