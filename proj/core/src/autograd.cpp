#include "boxcap/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace boxcap {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::frozen(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix m) { return push(std::move(m), false, nullptr); }

const Matrix& Tape::value(const Var& v) const {
  const Node& n = nodes_[v.id()];
  return n.external ? *n.external : n.value;
}

Var Tape::push(Matrix value, bool needs_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external ? *n.external : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& out) {
  if (out.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  const Matrix& v = value(out);
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("backward: output must be 1x1");
  if (!nodes_[out.id()].needs_grad) return;
  grad(out.id())(0, 0) += 1.0;
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

namespace ops {
namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars)
    if (v.tape()->needs_grad(v)) return true;
  return false;
}

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(std::move(out), any_grad({a, b}), [ia, ib, a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs_grad(a)) tp.grad(ia).noalias() += g * b.value().transpose();
    if (tp.needs_grad(b)) tp.grad(ib).noalias() += a.value().transpose() * g;
  });
}

Var linear(const Var& x, const Var& w) { return matmul(x, w); }

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& t = tape_of(x);
  require(x.cols() == w.rows(), "linear: input width does not match weight rows");
  require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape");
  Matrix out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.push(std::move(out), any_grad({x, w, b}), [x, w, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs_grad(x)) tp.grad(x.id()).noalias() += g * w.value().transpose();
    if (tp.needs_grad(w)) tp.grad(w.id()).noalias() += x.value().transpose() * g;
    if (tp.needs_grad(b)) tp.grad(b.id()) += g.colwise().sum();
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix out = a.value() + b.value();
  return t.push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs_grad(a)) tp.grad(a.id()) += g;
    if (tp.needs_grad(b)) tp.grad(b.id()) += g;
  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), any_grad({a, row}), [a, row](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs_grad(a)) tp.grad(a.id()) += g;
    if (tp.needs_grad(row)) tp.grad(row.id()) += g.colwise().sum();
  });
}

Var scale(const Var& a, double factor) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * factor;
  return t.push(std::move(out), any_grad({a}), [a, factor](Tape& tp, std::size_t self) {
    tp.grad(a.id()) += tp.grad_of(self) * factor;
  });
}

Var gather_rows(const Var& table, std::span<const Eigen::Index> index) {
  Tape& t = tape_of(table);
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), tv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < tv.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(index[i]);
  }
  std::vector<Eigen::Index> idx(index.begin(), index.end());
  return t.push(std::move(out), any_grad({table}),
                [table, idx = std::move(idx)](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad_of(self);
                  Matrix& dt = tp.grad(table.id());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = parts[0].rows(), cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
    grad = grad || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> in(parts.begin(), parts.end());
  return t.push(std::move(out), grad, [in = std::move(in)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Eigen::Index c0 = 0;
    for (const Var& p : in) {
      if (tp.needs_grad(p)) tp.grad(p.id()) += g.middleCols(c0, p.cols());
      c0 += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = parts[0].cols(), rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
    grad = grad || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> in(parts.begin(), parts.end());
  return t.push(std::move(out), grad, [in = std::move(in)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Eigen::Index r0 = 0;
    for (const Var& p : in) {
      if (tp.needs_grad(p)) tp.grad(p.id()) += g.middleRows(r0, p.rows());
      r0 += p.rows();
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
          "layer_norm: gain/bias shape");
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t.push(std::move(out), any_grad({x, gain, bias}),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad_of(self);
                  if (tp.needs_grad(gain))
                    tp.grad(gain.id()) += (g.array() * xhat.array()).colwise().sum().matrix();
                  if (tp.needs_grad(bias)) tp.grad(bias.id()) += g.colwise().sum();
                  if (!tp.needs_grad(x)) return;
                  Matrix& dx = tp.grad(x.id());
                  const auto gv = gain.value().row(0).array();
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    Eigen::ArrayXd dxhat = (g.row(i).array() * gv).transpose();
                    const Eigen::ArrayXd xh = xhat.row(i).array().transpose();
                    const double m1 = dxhat.mean();
                    const double m2 = (dxhat * xh).mean();
                    dx.row(i).array() += ((dxhat - m1 - xh * m2) * inv_std(i)).transpose();
                  }
                });
}

Var gelu(const Var& x) {
  Tape& t = tape_of(x);
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double a = 0.044715;
  const Matrix& xv = x.value();
  // tanh(u) = 1 - 2 / (exp(2u) + 1); Eigen vectorizes exp but not tanh for doubles.
  // Beyond |2u| = 60 the result is exactly +-1, and clamping keeps exp away from subnormals.
  const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> u = (2.0 * c) * (xv.array() + a * xv.array().cube());
  Matrix th = (1.0 - 2.0 / (u.max(-60.0).min(60.0).exp() + 1.0)).matrix();
  Matrix out = (0.5 * xv.array() * (1.0 + th.array())).matrix();
  return t.push(std::move(out), any_grad({x}), [x, th = std::move(th)](Tape& tp, std::size_t self) {
    const auto xa = x.value().array();
    const auto ta = th.array();
    const auto dydx =
        0.5 * (1.0 + ta) + 0.5 * xa * (1.0 - ta.square()) * c * (1.0 + 3.0 * a * xa.square());
    tp.grad(x.id()).array() += tp.grad_of(self).array() * dydx;
  });
}

Var sigmoid(const Var& x) {
  Tape& t = tape_of(x);
  Matrix out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  Matrix s = out;
  return t.push(std::move(out), any_grad({x}), [x, s = std::move(s)](Tape& tp, std::size_t self) {
    tp.grad(x.id()).array() += tp.grad_of(self).array() * s.array() * (1.0 - s.array());
  });
}

Var attention(const Var& qkv, std::span<const AttentionSegment> segments, int heads) {
  Tape& t = tape_of(qkv);
  const Matrix& in = qkv.value();
  require(heads > 0 && in.cols() % (3 * heads) == 0, "attention: width must be 3 * heads * dh");
  const Eigen::Index d = in.cols() / 3;
  const Eigen::Index dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  Matrix out = Matrix::Zero(in.rows(), d);
  std::vector<Matrix> probs;
  probs.reserve(segments.size() * static_cast<std::size_t>(heads));
  std::vector<AttentionSegment> segs(segments.begin(), segments.end());

  for (const AttentionSegment& s : segs) {
    require(s.mask && s.mask->rows() == s.length && s.mask->cols() == s.length,
            "attention: mask shape must match segment length");
    require(s.offset >= 0 && s.offset + s.length <= in.rows(), "attention: segment out of range");
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(s.offset, h * dh, s.length, dh);
      const auto k = in.block(s.offset, d + h * dh, s.length, dh);
      const auto v = in.block(s.offset, 2 * d + h * dh, s.length, dh);
      Matrix p(s.length, s.length);
      p.noalias() = q * k.transpose();
      p *= scl;
      p = s.mask->select(p.array(), neg_inf).matrix();
      for (Eigen::Index i = 0; i < s.length; ++i) {
        auto row = p.row(i).array();
        const double mx = row.maxCoeff();
        if (mx == neg_inf) {
          row.setZero();
          continue;
        }
        row = s.mask->row(i).select((row - mx).exp(), 0.0);
        row /= row.sum();
      }
      out.block(s.offset, h * dh, s.length, dh).noalias() = p * v;
      probs.push_back(std::move(p));
    }
  }

  return t.push(std::move(out), any_grad({qkv}),
                [qkv, segs = std::move(segs), probs = std::move(probs), heads, d, dh, scl](
                    Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad_of(self);
                  const Matrix& in = qkv.value();
                  Matrix& dqkv = tp.grad(qkv.id());
                  std::size_t pi = 0;
                  for (const AttentionSegment& s : segs) {
                    for (int h = 0; h < heads; ++h, ++pi) {
                      const Matrix& p = probs[pi];
                      const auto q = in.block(s.offset, h * dh, s.length, dh);
                      const auto k = in.block(s.offset, d + h * dh, s.length, dh);
                      const auto v = in.block(s.offset, 2 * d + h * dh, s.length, dh);
                      const auto go = g.block(s.offset, h * dh, s.length, dh);
                      Matrix dp(s.length, s.length);
                      dp.noalias() = go * v.transpose();
                      dqkv.block(s.offset, 2 * d + h * dh, s.length, dh).noalias() +=
                          p.transpose() * go;
                      Matrix ds(s.length, s.length);
                      for (Eigen::Index i = 0; i < s.length; ++i) {
                        const auto pr = p.row(i).array();
                        const auto dr = dp.row(i).array();
                        const double dot = (pr * dr).sum();
                        ds.row(i).array() = scl * pr * (dr - dot);
                      }
                      dqkv.block(s.offset, h * dh, s.length, dh).noalias() += ds * k;
                      dqkv.block(s.offset, d + h * dh, s.length, dh).noalias() +=
                          ds.transpose() * q;
                    }
                  }
                });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> target,
                          std::span<const double> weight) {
  Tape& t = tape_of(logits);
  const Matrix& z = logits.value();
  require(static_cast<Eigen::Index>(target.size()) == z.rows() &&
              target.size() == weight.size(),
          "softmax_cross_entropy: target/weight length must equal logits rows");
  Matrix prob(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i).array() - mx).exp().matrix();
    const double sum = prob.row(i).sum();
    prob.row(i) /= sum;
    const int y = target[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    require(y < z.cols(), "softmax_cross_entropy: target id out of range");
    loss += weight[static_cast<std::size_t>(i)] * -(z(i, y) - mx - std::log(sum));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> tg(target.begin(), target.end());
  std::vector<double> w(weight.begin(), weight.end());
  return t.push(std::move(out), any_grad({logits}),
                [logits, prob = std::move(prob), tg = std::move(tg), w = std::move(w)](
                    Tape& tp, std::size_t self) {
                  const double up = tp.grad_of(self)(0, 0);
                  Matrix& dz = tp.grad(logits.id());
                  for (Eigen::Index i = 0; i < prob.rows(); ++i) {
                    const int y = tg[static_cast<std::size_t>(i)];
                    if (y < 0) continue;
                    const double wi = up * w[static_cast<std::size_t>(i)];
                    dz.row(i) += wi * prob.row(i);
                    dz(i, y) -= wi;
                  }
                });
}

Var sigmoid_bce(const Var& z, std::span<const double> label, std::span<const double> weight,
                double eps) {
  Tape& t = tape_of(z);
  const Matrix& zv = z.value();
  require(zv.cols() == 1 && static_cast<Eigen::Index>(label.size()) == zv.rows() &&
              label.size() == weight.size(),
          "sigmoid_bce: expects n x 1 scores with n labels and weights");
  Eigen::VectorXd s(zv.rows());
  std::vector<bool> clipped(static_cast<std::size_t>(zv.rows()));
  double loss = 0.0;
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    const double raw = 1.0 / (1.0 + std::exp(-zv(i, 0)));
    const double sc = std::clamp(raw, eps, 1.0 - eps);
    clipped[static_cast<std::size_t>(i)] = (sc != raw);
    s(i) = sc;
    const double r = label[static_cast<std::size_t>(i)];
    loss += weight[static_cast<std::size_t>(i)] * -(r * std::log(sc) + (1.0 - r) * std::log(1.0 - sc));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<double> lb(label.begin(), label.end()), w(weight.begin(), weight.end());
  return t.push(std::move(out), any_grad({z}),
                [z, s = std::move(s), clipped = std::move(clipped), lb = std::move(lb),
                 w = std::move(w)](Tape& tp, std::size_t self) {
                  const double up = tp.grad_of(self)(0, 0);
                  Matrix& dz = tp.grad(z.id());
                  for (Eigen::Index i = 0; i < s.size(); ++i) {
                    const auto k = static_cast<std::size_t>(i);
                    if (clipped[k]) continue;
                    dz(i, 0) += up * w[k] * (s(i) - lb[k]);
                  }
                });
}

}  // namespace ops
}  // namespace boxcap
