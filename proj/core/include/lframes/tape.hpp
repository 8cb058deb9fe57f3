// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that propagates the node's gradient to its parents. backward()
// walks the nodes in reverse creation order, which is a reverse topological
// order because parents always exist before their children.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lframes/reps.hpp"

namespace lframes::nn {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is accumulated into `p.grad` by backward().
  Var param(Parameter& p);
  /// Leaf with a readable gradient after backward().
  Var input(Matrix value);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Loss must be 1 x 1.
  void backward(Var loss);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(Var v) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient buffer of node `id` when that node needs one.
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    if (!nodes_[id].needs_grad) return;
    auto& buf = grad_buffer(id);
    buf += g;
  }
  Matrix& grad_buffer(int id);
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }

  Var push(Matrix value, std::vector<int> parents, BackwardFn fn);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
    bool grad_ready = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise and broadcasting arithmetic.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // a[N x C] + row[1 x C]
Var mul_row(Var a, Var row);  // a[N x C] * row[1 x C]
Var mul_col(Var a, Var col);  // a[N x C] * col[N x 1]
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);

Var silu(Var a);
Var exp(Var a);
Var sqrt(Var a);
Var reciprocal(Var a);
Var abs(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, int start, int count);
Var gather_rows(Var a, const std::vector<int>& rows);

// Reductions over CSR segments: rows offsets[s] .. offsets[s+1]-1 form segment s.
Var segment_sum(Var a, const std::vector<int>& offsets);
Var segment_mean(Var a, const std::vector<int>& offsets);
/// Channel-wise maximum; gradient goes to the first row attaining it. Empty
/// segments produce zeros.
Var segment_max(Var a, const std::vector<int>& offsets);

Var sum(Var a);        // 1 x 1
Var mean(Var a);       // 1 x 1
Var row_sum(Var a);    // N x 1
Var row_dot(Var a, Var b);
Var row_norm(Var a);   // N x 1, sqrt of row squared sum
Var cross_rows(Var a, Var b);  // N x 3

/// Replaces rows where mask[i] is set by the matching row of `replacement`.
Var replace_rows(Var a, const std::vector<char>& mask, const Matrix& replacement);

/// Row n of `frames` is a d x d matrix M_n stored row-major; returns
/// rho(M_n) x_n (or rho(M_n^T) x_n when `transpose`). The pseudotensor factor
/// sign(det M_n) is held constant in the backward pass.
Var apply_rep(const RepSpec& spec, Var frames, Var x, bool transpose = false);

/// Row-wise A_n B_n (or A_n B_n^T) for d x d matrices stored row-major.
Var compose_frames(Var a, Var b, bool transpose_b, int dim);

/// Per-column (x - mean) / sqrt(var + eps) over the rows.
Var batch_standardize(Var x, double eps);
Var log_softmax_rows(Var x);

}  // namespace lframes::nn
