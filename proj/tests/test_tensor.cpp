#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tsf/gradcheck.hpp"
#include "tsf/tensor.hpp"

using namespace tsf;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

Shape random_shape(std::mt19937_64& rng) {
  const std::size_t caps[] = {4, 8, 16};
  std::uniform_int_distribution<int> rank(1, 3);
  Shape s(static_cast<std::size_t>(rank(rng)));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::uniform_int_distribution<std::size_t>(1, caps[3 - s.size() + i])(rng);
  }
  return s;
}

}  // namespace

TEST(Tensor, ConstructorRejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}, {}), ShapeError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(-1), 3u);
}

TEST(Tensor, MatmulIdentity) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  const auto c = matmul(eye, a);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, MatmulTwoByTwo) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  const auto c = matmul(a, b);
  // Hand expansion: [1*5+2*7, 1*6+2*8; 3*5+4*7, 3*6+4*8].
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Tensor, MatmulBatchShapes) {
  EXPECT_EQ(matmul(Tensor::zeros({3, 12, 128}), Tensor::zeros({128, 64})).shape(), (Shape{3, 12, 64}));
  EXPECT_EQ(matmul(Tensor::zeros({12, 128}), Tensor::zeros({3, 128, 64})).shape(), (Shape{3, 12, 64}));
  EXPECT_EQ(matmul(Tensor::zeros({3, 12, 8}), Tensor::zeros({3, 8, 5})).shape(), (Shape{3, 12, 5}));
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
    EXPECT_NE(msg.find("(4, 5)"), std::string::npos);
  }
}

TEST(Tensor, MatmulIdentityIsExact) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 7, m = 1 + trial % 5;
    std::vector<double> e(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) e[i * n + i] = 1.0;
    const auto a = random_tensor({n, m}, rng, -1e3, 1e3);
    const auto c = matmul(Tensor({n, n}, e), a);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(c[i], a[i]);
  }
}

TEST(Tensor, SoftmaxExamples) {
  auto s = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  s = softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  EXPECT_NEAR(s[0], 1.0 / 6, 1e-15);
  EXPECT_NEAR(s[1], 2.0 / 6, 1e-15);
  EXPECT_NEAR(s[2], 3.0 / 6, 1e-15);
  EXPECT_THROW(softmax(Tensor({2}, {0.0, NAN}), 0), std::domain_error);
  EXPECT_THROW(softmax(Tensor({2}, {0.0, INFINITY}), 0), std::domain_error);
}

TEST(Tensor, SoftmaxRowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto shape = random_shape(rng);
    const auto x = random_tensor(shape, rng, -30, 30);
    const int axis = static_cast<int>(rng() % shape.size());
    const auto s = softmax(x, axis);
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    const auto shifted = softmax(add(x, Tensor::scalar(c)), axis);
    std::size_t inner = 1;
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) inner *= shape[d];
    const std::size_t extent = shape[static_cast<std::size_t>(axis)];
    const std::size_t outer = x.numel() / (inner * extent);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < extent; ++k) {
          const auto idx = (o * extent + k) * inner + i;
          EXPECT_GE(s[idx], 0.0);
          EXPECT_NEAR(s[idx], shifted[idx], 1e-9);
          total += s[idx];
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(Tensor, ElementwiseExamples) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(tsf::tanh(Tensor::scalar(0.0)).item(), 0.0);
  const auto s = add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}));
  EXPECT_EQ(s[0], 4.0);
  EXPECT_EQ(s[1], 6.0);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
  EXPECT_EQ(mul(Tensor::zeros({2, 3}), Tensor::scalar(2.0)).shape(), (Shape{2, 3}));
  EXPECT_EQ(add(Tensor::zeros({4, 2, 3}), Tensor::zeros({2, 3})).shape(), (Shape{4, 2, 3}));
}

TEST(Tensor, BackwardSquare) {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(mul(x, x)));
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Tensor, BackwardFanOutAccumulates) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(add(sum(x), sum(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Tensor, ConstantsGetNoGradient) {
  Tensor x({2}, {1, 2}, true);
  Tensor c({2}, {3, 4});
  backward(sum(mul(x, c)));
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(x.grad()[0], 3.0);
}

TEST(Tensor, BackwardErrors) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), GraphError);
  ComputeGraph::current().reset();
  const auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
}

TEST(Tensor, EveryRequiresGradTensorGetsFullGradient) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor unused({4}, {1, 1, 1, 1}, true);
  Tensor b({3}, {1, -1, 2}, true);
  const auto y = add(a, b);
  backward(sum(mul(y, reshape(slice(y, 0, 0, 1), {3}))));
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_EQ(b.grad().size(), b.numel());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Tensor, MatmulGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  EXPECT_LT(max_gradient_error([&] { return sum(matmul(a, b)); }, {a, b}, 1e-6), 1e-5);
}

// Random shapes up to (4, 8, 16) for every primitive.
TEST(Tensor, PrimitivesMatchFiniteDifferencesOnRandomShapes) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    const auto s = random_shape(rng);
    auto x = random_tensor(s, rng), y = random_tensor(s, rng);
    auto away = random_tensor(s, rng);
    for (auto& v : away.mutable_data()) v += v < 0 ? -0.1 : 0.1;
    const Shape last{s.back()};
    auto g = random_tensor(last, rng, 0.5, 1.5), bias = random_tensor(last, rng);
    const std::size_t k = 1 + rng() % 5;
    auto w = random_tensor({s.back(), k}, rng);
    const int ax = static_cast<int>(rng() % s.size());
    const double tol = 1e-4;
    EXPECT_LT(max_gradient_error([&] { return probe_loss(add(x, y)); }, {x, y}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(sub(x, y)); }, {x, y}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(mul(x, y)); }, {x, y}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(scale(x, 0.3)); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(tsf::tanh(x)); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(sigmoid(x)); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(relu(away)); }, {away}, 1e-6), tol);
    if (s.size() >= 2) {
      EXPECT_LT(max_gradient_error([&] { return probe_loss(matmul(x, w)); }, {x, w}, 1e-6), tol);
    }
    EXPECT_LT(max_gradient_error([&] { return probe_loss(softmax(x, ax)); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return mean(mul(x, y)); }, {x, y}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(reshape(x, {x.numel()})); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(transpose(x, 0, -1)); }, {x}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(concat({x, y}, ax)); }, {x, y}, 1e-6), tol);
    EXPECT_LT(max_gradient_error([&] { return probe_loss(slice(x, ax, 0, 1)); }, {x}, 1e-6), tol);
    if (s.back() >= 2) {
      EXPECT_LT(max_gradient_error([&] { return probe_loss(layer_norm(x, g, bias)); }, {x, g, bias}, 1e-6), tol);
    }
  }
}

TEST(Tensor, TransposeConcatSliceValues) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto t = transpose(x, 0, 1);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  const auto c = concat({x, x}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 6}));
  EXPECT_EQ(c[3], 1.0);
  const auto s = slice(x, 1, 1, 2);
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{2, 3, 5, 6}));
  EXPECT_THROW(slice(x, 1, 2, 2), ShapeError);
  EXPECT_THROW(concat({x, Tensor::zeros({3, 3})}, 1), ShapeError);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  auto& graph = ComputeGraph::current();
  graph.reset();
  Tensor x({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    const auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(graph.size(), 0u);
}
