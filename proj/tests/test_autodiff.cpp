#include <gtest/gtest.h>

#include <cmath>

#include "gradient_cases.hpp"
#include "lgwae/autodiff.hpp"
#include "lgwae/errors.hpp"

using namespace lgwae;
using fixtures::check_gradient;

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (const auto& c : fixtures::primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto r = check_gradient(c.fn, fixtures::random_inputs(c, rng), seed);
      EXPECT_LE(r.rel_error, 1e-5) << c.name << " seed " << seed;
      EXPECT_GT(r.scale, 0.0) << c.name;
    }
  }
}

TEST(Autodiff, SharedNodeAccumulatesGradient) {
  ad::Graph g;
  const ad::Var x = g.leaf(Tensor::vector({2.0, -3.0}), true);
  const ad::Var y = ad::sum(ad::mul(x, x));
  g.backward(y);
  EXPECT_EQ(g.grad(x), Tensor::vector({4.0, -6.0}));
}

TEST(Autodiff, BackwardRequiresScalarOnce) {
  ad::Graph g;
  const ad::Var x = g.leaf(Tensor(Shape{2, 2}, 1.0), true);
  EXPECT_THROW(g.backward(x), ShapeError);
  const ad::Var s = ad::sum(x);
  g.backward(s);
  EXPECT_THROW(g.backward(s), std::logic_error);
}

TEST(Autodiff, NoGradientWithoutRequest) {
  ad::Graph g;
  const ad::Var x = g.leaf(Tensor::vector({1.0, 2.0}));
  const ad::Var w = g.leaf(Tensor::vector({3.0, 4.0}), true);
  g.backward(ad::sum(ad::mul(x, w)));
  EXPECT_EQ(g.grad(w), Tensor::vector({1.0, 2.0}));
  EXPECT_FALSE(g.requires_grad(x));
}

TEST(Autodiff, BindDoesNotCopy) {
  Tensor external = Tensor::vector({1.0, 2.0});
  ad::Graph g;
  const ad::Var v = g.bind(external);
  EXPECT_EQ(&v.value(), &external);
}

TEST(Autodiff, ShapeErrorsNameTheOp) {
  ad::Graph g;
  const ad::Var a = g.leaf(Tensor(Shape{2, 3}));
  const ad::Var b = g.leaf(Tensor(Shape{2, 2}));
  try {
    ad::matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::slice_rows(a, 1, 3), ShapeError);
  EXPECT_THROW(ad::gather_rows(a, {2}), ShapeError);
  EXPECT_THROW(ad::reshape(a, Shape{4}), ShapeError);
}

TEST(Autodiff, KinkSubgradientsAreZero) {
  ad::Graph g;
  const ad::Var x = g.leaf(Tensor::vector({0.0, 0.0}), true);
  g.backward(ad::add(ad::l2_norm(x), ad::l1(x)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0.0, 0.0}));
}

TEST(Autodiff, StableSigmoidAndBce) {
  ad::Graph g;
  const ad::Var x = g.leaf(Tensor::vector({-800.0, 800.0}));
  const Tensor s = ad::sigmoid(x).value();
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
  const Tensor l = ad::bce_with_logits(x, Tensor::vector({0.0, 1.0})).value();
  EXPECT_TRUE(l.all_finite());
  EXPECT_NEAR(l[0], 0.0, 1e-300);
  const Tensor bad = ad::bce_with_logits(x, Tensor::vector({1.0, 0.0})).value();
  EXPECT_NEAR(bad[0], 800.0, 1e-9);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(2);
  ad::Graph g;
  const Tensor s = ad::softmax_lastdim(g.leaf(fixtures::random_tensor({4, 7}, rng, -50, 50))).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (double v : s.row(r)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Autodiff, OuterSumRowsLayout) {
  ad::Graph g;
  const ad::Var u = g.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
  const ad::Var v = g.leaf(Tensor::matrix({{10, 20}, {30, 40}, {50, 60}}));
  const Tensor o = ad::outer_sum_rows(u, v).value();
  ASSERT_EQ(o.shape(), (Shape{6, 2}));
  EXPECT_EQ(o.at(1, 0), 1 + 30);
  EXPECT_EQ(o.at(5, 1), 4 + 60);
}

TEST(Attention, RejectsIndivisibleHeads) {
  std::mt19937_64 rng(1);
  ad::Graph g;
  auto leaf = [&](Shape s) { return g.leaf(fixtures::random_tensor(s, rng)); };
  const ad::AttentionParams p{leaf({4, 4}), leaf({1, 4}), leaf({4, 4}), leaf({1, 4}),
                              leaf({4, 4}), leaf({1, 4}), leaf({4, 4}), leaf({1, 4})};
  const ad::Var x = leaf({3, 4});
  EXPECT_THROW(ad::multi_head_attention(x, x, x, p, 3), ConfigError);
}
