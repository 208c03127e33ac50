#include <gtest/gtest.h>

#include <random>

#include "boxcap/autograd.hpp"
#include "gradcheck.hpp"

using namespace boxcap;

namespace {

Parameter random_param(const std::string& name, int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return {name, m};
}

// Reduces any matrix to a scalar with fixed random weights so every entry matters.
Var weighted_sum(Tape& t, const Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix w(x.cols(), 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = d(rng);
  Matrix ones = Matrix::Ones(1, x.rows());
  return ops::matmul(t.constant(ones), ops::matmul(x, t.constant(w)));
}

void expect_ok(const std::vector<gradcheck::GroupError>& g, double tol = 1e-6) {
  for (const auto& e : g) EXPECT_LT(e.max_rel, tol) << e.name << " abs " << e.max_abs;
}

}  // namespace

TEST(Autograd, LinearAddScaleConcatGather) {
  std::mt19937_64 rng(1);
  Parameter x = random_param("x", 4, 3, rng), w = random_param("w", 3, 5, rng), b = random_param("b", 1, 5, rng);
  Parameter y = random_param("y", 4, 5, rng), r = random_param("r", 1, 5, rng);
  auto f = [&](Tape& t) {
    Var h = ops::linear(t.param(x), t.param(w), t.param(b));
    h = ops::add(h, ops::scale(t.param(y), 0.7));
    h = ops::add_row(h, t.param(r));
    const Var parts[] = {h, t.param(y)};
    Var c = ops::concat_cols(parts);
    const Var rows[] = {c, c};
    Var s = ops::concat_rows(rows);
    const std::vector<Eigen::Index> idx = {0, 3, 3, 5, 7};
    return weighted_sum(t, ops::gather_rows(s, idx), 11);
  };
  expect_ok(gradcheck::check(f, {&x, &w, &b, &y, &r}));
}

TEST(Autograd, LayerNormGeluSigmoid) {
  std::mt19937_64 rng(2);
  Parameter x = random_param("x", 5, 6, rng, 2.0), g = random_param("g", 1, 6, rng), b = random_param("b", 1, 6, rng);
  auto f = [&](Tape& t) {
    Var h = ops::layer_norm(t.param(x), t.param(g), t.param(b));
    return weighted_sum(t, ops::sigmoid(ops::gelu(h)), 12);
  };
  expect_ok(gradcheck::check(f, {&x, &g, &b}));
}

TEST(Autograd, GeluMatchesReferenceFormula) {
  Tape t;
  Matrix x(1, 7);
  x << -40.0, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0;
  const Matrix y = ops::gelu(t.constant(x)).value();
  for (int i = 0; i < 7; ++i) {
    const double v = x(0, i);
    const double want = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
    EXPECT_NEAR(y(0, i), want, 1e-14 * std::max(1.0, std::abs(want)));
  }
}

TEST(Autograd, AttentionWithSegmentsAndMasks) {
  std::mt19937_64 rng(3);
  Parameter qkv = random_param("qkv", 9, 12, rng);
  BoolMatrix m1(5, 5), m2(4, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) m1(i, j) = j <= i || j < 2;
  m1.row(4).setConstant(false);  // a fully masked row
  m2.setConstant(true);
  m2(0, 3) = false;
  const AttentionSegment segs[] = {{0, 5, &m1}, {5, 4, &m2}};
  auto f = [&](Tape& t) { return weighted_sum(t, ops::attention(t.param(qkv), segs, 2), 13); };
  expect_ok(gradcheck::check(f, {&qkv}));
  Tape t;
  const Matrix out = ops::attention(t.param(qkv), segs, 2).value();
  EXPECT_TRUE(out.row(4).isZero(0.0));
}

TEST(Autograd, AttentionIgnoresMaskedColumns) {
  std::mt19937_64 rng(4);
  Parameter qkv = random_param("qkv", 4, 6, rng);
  BoolMatrix m(4, 4);
  m.setConstant(true);
  m.col(3).setConstant(false);
  const AttentionSegment seg[] = {{0, 4, &m}};
  Tape t1;
  const Matrix a = ops::attention(t1.param(qkv), seg, 1).value();
  qkv.value.row(3).setRandom();
  Tape t2;
  const Matrix b = ops::attention(t2.param(qkv), seg, 1).value();
  EXPECT_EQ(Matrix(a.topRows(3)), Matrix(b.topRows(3)));
}

TEST(Autograd, CrossEntropyAndBce) {
  std::mt19937_64 rng(5);
  Parameter z = random_param("z", 4, 6, rng), s = random_param("s", 3, 1, rng);
  const std::vector<int> target = {1, -1, 5, 0};
  const std::vector<double> w = {0.5, 1.0, 0.25, 0.25};
  const std::vector<double> lab = {1, 0, 1}, bw = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  auto f = [&](Tape& t) {
    const Var parts[] = {ops::softmax_cross_entropy(t.param(z), target, w), ops::sigmoid_bce(t.param(s), lab, bw)};
    return ops::add(parts[0], parts[1]);
  };
  expect_ok(gradcheck::check(f, {&z, &s}));

  Tape t;
  Matrix u = Matrix::Zero(1, 20);
  const std::vector<int> one = {3};
  const std::vector<double> unit = {1.0};
  EXPECT_NEAR(ops::softmax_cross_entropy(t.constant(u), one, unit).scalar(), std::log(20.0), 1e-12);
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  Parameter p("p", Matrix::Constant(1, 1, 3.0));
  Tape t;
  Var a = t.param(p);
  Var y = ops::add(ops::scale(a, 2.0), ops::scale(a, 5.0));
  t.backward(y);
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 7.0);
}

TEST(Autograd, FrozenParametersGetNoGradient) {
  Parameter p("p", Matrix::Constant(1, 1, 3.0)), q("q", Matrix::Constant(1, 1, 2.0));
  Tape t;
  Var y = ops::add(t.frozen(p), ops::scale(t.param(q), 4.0));
  t.backward(y);
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(q.grad(0, 0), 4.0);
}

TEST(Autograd, BackwardNeedsScalar) {
  Parameter p("p", Matrix::Ones(2, 2));
  Tape t;
  EXPECT_THROW(t.backward(t.param(p)), std::invalid_argument);
}
