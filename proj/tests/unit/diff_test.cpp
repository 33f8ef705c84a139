#include <cmath>
#include <functional>
#include <ostream>
#include <thread>

#include <gtest/gtest.h>

#include "cdsd/diff.hpp"
#include "cdsd/rng.hpp"

namespace cdsd::diff {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Central differences computed here rather than through finite_difference_check.
double max_rel_error(const Expr& root, Bindings b, const std::string& id, double h = 1e-6) {
  const Gradients g = gradient(root, b, {id});
  Tensor& x = b.at(id);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = evaluate(root, b).item();
    x[i] = saved - h;
    const double down = evaluate(root, b).item();
    x[i] = saved;
    const double num = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(g.at(id)[i] - num) / std::max(1.0, std::abs(g.at(id)[i])));
  }
  return worst;
}

TEST(Evaluate, ForcedArithmetic) {
  const Expr x = param("x", {});
  EXPECT_DOUBLE_EQ(evaluate(square(x), {{"x", Tensor::scalar(3.0)}}).item(), 9.0);
  EXPECT_DOUBLE_EQ(evaluate(sigmoid(x), {{"x", Tensor::scalar(0.0)}}).item(), 0.5);

  const Tensor ones23({2, 3}, 1.0), ones32({3, 2}, 1.0);
  const Tensor out = evaluate(matmul(constant(ones23), constant(ones32)), {});
  ASSERT_EQ(out.shape(), (Shape{2, 2}));
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Evaluate, ElementwiseOpsMatchScalarFormulas) {
  const Tensor a = Tensor::matrix(1, 4, {-2.0, -0.5, 0.5, 2.0});
  const Expr x = constant(a);
  const Tensor lr = evaluate(leaky_relu(x), {});
  const Tensor ex = evaluate(exp(x), {});
  const Tensor sg = evaluate(sigmoid(x), {});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(lr[i], a[i] > 0 ? a[i] : 0.01 * a[i]);
    EXPECT_DOUBLE_EQ(ex[i], std::exp(a[i]));
    EXPECT_NEAR(sg[i], 1.0 / (1.0 + std::exp(-a[i])), 1e-15);
  }
}

TEST(Evaluate, StructuralOps) {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Expr x = constant(a);
  EXPECT_EQ(evaluate(transpose(x), {}), Tensor::matrix(3, 2, {1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(evaluate(reshape(x, {3, 2}), {}), Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(evaluate(slice(x, 1, 1, 3), {}), Tensor::matrix(2, 2, {2, 3, 5, 6}));
  EXPECT_EQ(evaluate(slice(x, 0, 1, 2), {}), Tensor::matrix(1, 3, {4, 5, 6}));
  EXPECT_EQ(evaluate(concat({x, x}, 0), {}), Tensor::matrix(4, 3, {1, 2, 3, 4, 5, 6, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(evaluate(concat({x, slice(x, 1, 0, 1)}, 1), {}), Tensor::matrix(2, 4, {1, 2, 3, 1, 4, 5, 6, 4}));
  EXPECT_EQ(evaluate(broadcast(slice(x, 0, 0, 1), {2, 3}), {}), Tensor::matrix(2, 3, {1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(evaluate(broadcast(slice(x, 1, 2, 3), {2, 3}), {}), Tensor::matrix(2, 3, {3, 3, 3, 6, 6, 6}));
  EXPECT_EQ(evaluate(embed_lookup(x, {1, 1, 0}), {}), Tensor::matrix(3, 3, {4, 5, 6, 4, 5, 6, 1, 2, 3}));
  EXPECT_DOUBLE_EQ(evaluate(sum(x), {}).item(), 21.0);
  EXPECT_DOUBLE_EQ(evaluate(mean(x), {}).item(), 3.5);
}

TEST(Evaluate, Errors) {
  const Expr x = param("x", {2, 2});
  EXPECT_THROW(evaluate(sum(x), {}), EvalError);
  EXPECT_THROW(evaluate(sum(x), {{"x", Tensor({3, 2})}}), ShapeError);
  EXPECT_THROW(matmul(x, param("y", {3, 1})), ShapeError);
  EXPECT_THROW(add(x, param("z", {2, 3})), ShapeError);
  EXPECT_THROW(reshape(x, {3}), ShapeError);
  EXPECT_THROW(slice(x, 1, 1, 3), ShapeError);
  EXPECT_THROW(embed_lookup(x, {2}), ShapeError);

  try {
    evaluate(sum(log(x)), {{"x", Tensor({2, 2}, -1.0)}});
    FAIL() << "expected a non-finite error";
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
  }
  EXPECT_THROW(gradient(x, {{"x", Tensor({2, 2})}}, {"x"}), EvalError);
}

TEST(Evaluate, Deterministic) {
  Rng rng(3);
  const Expr A = param("A", {8, 8});
  const Expr e = sum(sigmoid(matmul(A, exp(scale(A, 0.1)))));
  const Bindings b{{"A", random_tensor({8, 8}, rng)}};
  const double first = evaluate(e, b).item();
  for (int i = 0; i < 5; ++i) EXPECT_EQ(evaluate(e, b).item(), first);
}

TEST(Evaluate, SharedExpressionAcrossThreads) {
  Rng rng(4);
  const Expr A = param("A", {16, 16});
  const Expr e = sum(leaky_relu(matmul(A, A)));
  const Bindings b{{"A", random_tensor({16, 16}, rng)}};
  const Gradients ref = gradient(e, b, {"A"});
  std::vector<Gradients> got(4);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < got.size(); ++t) threads.emplace_back([&, t] { got[t] = gradient(e, b, {"A"}); });
  for (auto& t : threads) t.join();
  for (const auto& g : got) EXPECT_EQ(g.at("A"), ref.at("A"));
}

TEST(Gradient, AnalyticScalars) {
  const Expr x = param("x", {});
  EXPECT_DOUBLE_EQ(gradient(square(x), {{"x", Tensor::scalar(3.0)}}, {"x"}).at("x").item(), 6.0);
  EXPECT_DOUBLE_EQ(gradient(sigmoid(x), {{"x", Tensor::scalar(0.0)}}, {"x"}).at("x").item(), 0.25);
  EXPECT_LT(finite_difference_check(square(x), {{"x", Tensor::scalar(1.7)}}, std::set<std::string>{"x"}, 1e-5),
            1e-8);
}

TEST(Gradient, LeakyReluKinkUsesNegativeSlope) {
  const Expr x = param("x", {});
  EXPECT_DOUBLE_EQ(gradient(leaky_relu(x), {{"x", Tensor::scalar(0.0)}}, {"x"}).at("x").item(), kLeakySlope);
  EXPECT_DOUBLE_EQ(gradient(leaky_relu(x), {{"x", Tensor::scalar(1e-9)}}, {"x"}).at("x").item(), 1.0);
}

TEST(Gradient, SumLeakyReluOfAffineMatchesFiniteDifferences) {
  Rng rng(11);
  const Expr W = param("W", {4, 3});
  const Expr x = constant(random_tensor({3, 1}, rng));
  const Expr e = sum(leaky_relu(matmul(W, x)));
  Bindings b{{"W", random_tensor({4, 3}, rng)}};
  // Keep pre-activations away from the kink.
  const Tensor pre = evaluate(matmul(W, x), b);
  for (double v : pre.data()) ASSERT_GT(std::abs(v), 1e-3);
  EXPECT_LT(max_rel_error(e, b, "W", 1e-5), 1e-5);
}

struct OpCase {
  const char* name;
  std::function<Expr(const Expr&, const Expr&)> build;  // (A: 3x4, B: 4x3) -> any shape
  double lo = -1.0, hi = 1.0;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  Rng rng(101);
  const Expr A = param("A", {3, 4});
  const Expr B = param("B", {4, 3});
  Expr body = c.build(A, B);
  // A random linear functional makes every output coordinate matter.
  const Expr weights = constant(random_tensor(body.shape(), rng));
  const Expr root = body.shape().empty() ? body : sum(mul(body, weights));
  for (int trial = 0; trial < 5; ++trial) {
    Bindings b{{"A", random_tensor({3, 4}, rng, c.lo, c.hi)}, {"B", random_tensor({4, 3}, rng, c.lo, c.hi)}};
    EXPECT_LT(max_rel_error(root, b, "A"), 1e-5) << c.name;
    EXPECT_LT(max_rel_error(root, b, "B"), 1e-5) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"add", [](const Expr& a, const Expr& b) { return add(a, transpose(b)); }},
        OpCase{"sub", [](const Expr& a, const Expr& b) { return sub(transpose(b), a); }},
        OpCase{"mul", [](const Expr& a, const Expr& b) { return mul(a, transpose(b)); }},
        OpCase{"matmul", [](const Expr& a, const Expr& b) { return matmul(a, b); }},
        OpCase{"reshape", [](const Expr& a, const Expr& b) { return mul(reshape(a, {4, 3}), b); }},
        OpCase{"sum", [](const Expr& a, const Expr& b) { return mul(sum(a), sum(b)); }},
        OpCase{"mean", [](const Expr& a, const Expr& b) { return mul(mean(square(a)), mean(b)); }},
        OpCase{"square", [](const Expr& a, const Expr& b) { return square(matmul(a, b)); }},
        OpCase{"exp", [](const Expr& a, const Expr& b) { return exp(matmul(a, b)); }},
        OpCase{"log", [](const Expr& a, const Expr& b) { return log(add(a, transpose(b))); }, 0.5, 2.0},
        OpCase{"sigmoid", [](const Expr& a, const Expr& b) { return sigmoid(scale(matmul(a, b), 2.0)); }},
        OpCase{"leaky_relu", [](const Expr& a, const Expr& b) { return leaky_relu(add(a, transpose(b))); }},
        OpCase{"concat0", [](const Expr& a, const Expr& b) { return concat({a, transpose(b)}, 0); }},
        OpCase{"concat1", [](const Expr& a, const Expr& b) { return concat({a, slice(transpose(b), 1, 0, 2)}, 1); }},
        OpCase{"slice", [](const Expr& a, const Expr& b) { return mul(slice(a, 0, 1, 3), slice(transpose(b), 0, 0, 2)); }},
        OpCase{"broadcast_row", [](const Expr& a, const Expr& b) { return mul(broadcast(slice(a, 0, 0, 1), {3, 4}), transpose(b)); }},
        OpCase{"broadcast_col", [](const Expr& a, const Expr& b) { return mul(broadcast(slice(a, 1, 2, 3), {3, 4}), transpose(b)); }},
        OpCase{"broadcast_scalar", [](const Expr& a, const Expr& b) { return mul(broadcast(sum(b), {3, 4}), a); }},
        OpCase{"embed_lookup", [](const Expr& a, const Expr& b) { return matmul(embed_lookup(a, {2, 0, 2, 1}), b); }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(StopGradient, PassesValueBlocksGradient) {
  Rng rng(5);
  const Expr A = param("A", {3, 3});
  const Bindings b{{"A", random_tensor({3, 3}, rng)}};
  const Expr e = sigmoid(A);
  EXPECT_EQ(evaluate(stop_gradient(e), b), evaluate(e, b));
  const Tensor g = gradient(sum(stop_gradient(e)), b, {"A"}).at("A");
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(StopGradient, StraightThroughComposition) {
  // hard + (soft - sg(soft)) evaluates to hard and differentiates like soft.
  Rng rng(6);
  const Expr A = param("A", {2, 3});
  const Bindings b{{"A", random_tensor({2, 3}, rng)}};
  const Expr soft = sigmoid(A);
  const Tensor hard = Tensor::matrix(2, 3, {1, 0, 1, 0, 0, 1});
  const Expr st = add(constant(hard), sub(soft, stop_gradient(soft)));
  const Tensor v = evaluate(st, b);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], hard[i], 1e-15);
  EXPECT_EQ(gradient(sum(st), b, {"A"}).at("A"), gradient(sum(soft), b, {"A"}).at("A"));
}

TEST(Gradient, UnreachableParameterGetsZeros) {
  const Expr x = param("x", {});
  const Expr y = param("y", {2, 2});
  const Gradients g = gradient(square(x), {{"x", Tensor::scalar(1.0)}, {"y", Tensor({2, 2}, 1.0)}}, {"x", "y"});
  EXPECT_EQ(g.at("y"), Tensor({2, 2}, 0.0));
}

TEST(Gradient, SharedSubexpressionAccumulates) {
  const Expr x = param("x", {});
  const Expr s = square(x);
  const Expr e = add(s, mul(s, x));  // x^2 + x^3
  EXPECT_DOUBLE_EQ(gradient(e, {{"x", Tensor::scalar(2.0)}}, {"x"}).at("x").item(), 4.0 + 12.0);
}

}  // namespace
}  // namespace cdsd::diff
