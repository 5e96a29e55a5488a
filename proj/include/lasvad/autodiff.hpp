#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape owns every intermediate value recorded during a forward pass. Ops are
// free functions taking and returning Var handles; each op records a closure
// that pushes the upstream gradient into its parents. Nodes live in a deque so
// references to values stay valid while the graph grows.

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace lasvad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  // Records an op output. The closure runs only if some parent requires grad.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  // Seeds d(root)/d(root) = 1 and propagates in reverse recording order.
  void backward(Var root);

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  const Matrix& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  // Adds g into the gradient of v; no-op for constants.
  void accumulate(Var v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// Broadcasts: row is 1xN added to every row; col is Tx1 multiplying every column.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var mul_col(Var a, Var col);

// Pointwise nonlinearities.
Var sigmoid(Var a);
Var relu(Var a);
Var gelu(Var a);
Var abs(Var a);
Var neg_log_clamped(Var a, double eps);

// Row-wise ops.
Var row_softmax(Var a);
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var a);  // throws DegenerateInputError on a zero row

// Slicing and assembly.
Var rows(Var a, Index start, Index count);
Var cols(Var a, Index start, Index count);
Var element(Var a, Index row, Index col);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

// Reductions.
Var sum(Var a);
Var mean(Var a);

// Mean of the K largest entries of every column (1 x cols). Ties are broken
// towards the lower row index so the selection is deterministic.
Var topk_mean_cols(Var a, Index k);

// Averages window outputs placed at row offsets `starts` into a T-row result.
Var overlap_average(std::span<const Var> parts, std::span<const Index> starts, Index total_rows);

// Row 0 is zero; row t is |a[t] - a[t-1]|.
Var temporal_absdiff(Var a);

// Depthwise temporal convolution, kernel 3x C (taps t-1, t, t+1), zero padding.
Var depthwise_conv3(Var a, Var kernel, Var bias);

// Per-row cosine between a[t] and reference.row(index[t]); 0 for a zero a[t].
// The reference is treated as constant.
Var cosine_to_reference(Var a, const Matrix& reference, std::span<const Index> index);

}  // namespace ad
}  // namespace lasvad
