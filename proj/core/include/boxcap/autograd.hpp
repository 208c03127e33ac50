#pragma once

// Small reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Values live on the tape;
// parameters are referenced (not copied) and receive their gradients when
// Tape::backward() runs. Everything is double precision.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace boxcap {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf referencing a parameter; its gradient is added to p.grad on backward().
  Var param(Parameter& p);
  /// Leaf referencing a parameter that will not receive gradients.
  Var frozen(const Parameter& p);
  Var constant(Matrix m);

  const Matrix& value(const Var& v) const;
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all parameters.
  void backward(const Var& out);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var push(Matrix value, bool needs_grad, BackwardFn fn);
  Matrix& grad(std::size_t id);
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() != 0; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Parameter* param = nullptr;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
};

/// One attention group inside a packed sequence: rows [offset, offset + length)
/// attend among themselves under `mask` (length x length, true = allowed).
struct AttentionSegment {
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
  const BoolMatrix* mask = nullptr;
};

namespace ops {

Var matmul(const Var& a, const Var& b);
/// x * w (+ b). x: n x in, w: in x out, b: 1 x out.
Var linear(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);
Var add(const Var& a, const Var& b);
/// Adds a 1 x c row to every row of a.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double factor);
/// out.row(i) = table.row(index[i]).
Var gather_rows(const Var& table, std::span<const Eigen::Index> index);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var gelu(const Var& x);
Var sigmoid(const Var& x);

/// Multi-head scaled dot-product attention. qkv holds [Q | K | V] column blocks
/// (n x 3d). Rows whose mask row is all false produce zeros.
Var attention(const Var& qkv, std::span<const AttentionSegment> segments, int heads);

/// sum_i weight[i] * -log softmax(logits.row(i))[target[i]]; rows with target < 0 are skipped.
Var softmax_cross_entropy(const Var& logits, std::span<const int> target,
                          std::span<const double> weight);

/// sum_i weight[i] * -[r log s + (1-r) log(1-s)] with s = sigmoid(z) clipped to [eps, 1-eps].
Var sigmoid_bce(const Var& z, std::span<const double> label, std::span<const double> weight,
                double eps = 1e-7);

}  // namespace ops

/// Keeps large tape buffers on the heap instead of fresh mmap pages, which roughly
/// halves step time. Process-wide; call once from main. No-op outside glibc.
void tune_allocator();

}  // namespace boxcap
