#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "nvs/ops.hpp"

namespace {

using nvs::Shape;
using nvs::testing::gradcheck;
using nvs::testing::project;
using nvs::testing::random_leaf;
using TD = nvs::Tensor<double>;
using TF = nvs::Tensor<float>;

void expect_grad_ok(const std::function<TD()>& f, const std::vector<TD>& wrt,
                    std::uint64_t seed = 1) {
  nvs::testing::GradcheckOptions opt;
  opt.seed = seed;
  const auto r = gradcheck(f, wrt, opt);
  EXPECT_TRUE(r.ok) << r.failure;
  EXPECT_GT(r.checked, 0);
}

TEST(Autodiff, ChainAndFanOutAccumulate) {
  auto x = TD::from_data({2}, {1.5, -2.0});
  x.set_requires_grad();
  auto y = x * x + x;  // dy/dx = 2x + 1
  nvs::sum(y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -3.0);
}

TEST(Autodiff, IntermediateGradsDroppedUnlessRetained) {
  auto x = TD::from_data({3}, {1, 2, 3});
  x.set_requires_grad();
  auto h = nvs::exp(x);
  auto k = nvs::exp(x);
  k.retain_grad();
  nvs::sum(h + k).backward();
  EXPECT_FALSE(h.has_grad());
  ASSERT_TRUE(k.has_grad());
  EXPECT_DOUBLE_EQ(k.grad()[0], 1.0);
}

TEST(Autodiff, DetachBlocksFlowAndSharesValues) {
  auto x = TD::from_data({2}, {2, 3});
  x.set_requires_grad();
  auto d = x.detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.values()[1], 3.0);
  nvs::sum(x * d).backward();  // only the non-detached factor carries gradient
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 3.0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  auto x = TD::from_data({1}, {1});
  x.set_requires_grad();
  nvs::NoGradGuard g;
  auto y = nvs::exp(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Autodiff, BackwardNeedsScalar) {
  auto x = random_leaf({3}, 1);
  EXPECT_THROW(nvs::exp(x).backward(), nvs::ShapeError);
}

TEST(Broadcast, ShapesAndErrors) {
  EXPECT_EQ(nvs::broadcast_shapes({3, 1, 5}, {4, 1}), (Shape{3, 4, 5}));
  EXPECT_THROW(nvs::broadcast_shapes({3, 2}, {4}), nvs::ShapeError);
}

TEST(Grad, Unary) {
  const nvs::UnaryOp ops[] = {nvs::UnaryOp::kNeg,  nvs::UnaryOp::kExp,     nvs::UnaryOp::kLog,
                              nvs::UnaryOp::kAbs,  nvs::UnaryOp::kGelu,    nvs::UnaryOp::kRelu,
                              nvs::UnaryOp::kSigmoid, nvs::UnaryOp::kTanh, nvs::UnaryOp::kSqrt,
                              nvs::UnaryOp::kSquare};
  int i = 0;
  for (auto op : ops) {
    // Positive inputs away from zero keep log/sqrt/abs/relu smooth.
    auto x = random_leaf({4, 5}, 100 + i, 0.2, 2.0);
    expect_grad_ok([&] { return project(nvs::unary(op, x), 7); }, {x}, i++);
  }
}

TEST(Grad, BinaryBroadcast) {
  const nvs::BinaryOp ops[] = {nvs::BinaryOp::kAdd, nvs::BinaryOp::kSub, nvs::BinaryOp::kMul,
                               nvs::BinaryOp::kDiv, nvs::BinaryOp::kMin, nvs::BinaryOp::kMax};
  int i = 0;
  for (auto op : ops) {
    auto a = random_leaf({3, 1, 4}, 200 + i, 0.5, 1.5);
    auto b = random_leaf({2, 1}, 300 + i, 0.6, 1.4);
    expect_grad_ok([&] { return project(nvs::binary(op, a, b), 9); }, {a, b}, i++);
  }
}

TEST(Grad, AffineClampSumMeanMax) {
  auto x = random_leaf({3, 4, 5}, 5);
  expect_grad_ok([&] { return project(nvs::affine(x, 2.5, -1.0), 1); }, {x});
  expect_grad_ok([&] { return project(nvs::clamp_min(x, 0.05), 2); }, {x});
  expect_grad_ok([&] { return nvs::mean(nvs::square(x)); }, {x});
  expect_grad_ok([&] { return project(nvs::sum(x, 1, true), 3); }, {x});
  expect_grad_ok([&] { return project(nvs::mean(x, -1), 4); }, {x});
  expect_grad_ok([&] { return project(nvs::max(x, 0), 5); }, {x});
}

TEST(Grad, SoftmaxLayernorm) {
  auto x = random_leaf({4, 6}, 8, -2, 2);
  auto g = random_leaf({6}, 9, 0.5, 1.5);
  auto b = random_leaf({6}, 10);
  expect_grad_ok([&] { return project(nvs::softmax(x, -1), 11); }, {x});
  expect_grad_ok([&] { return project(nvs::softmax(x, 0), 12); }, {x});
  expect_grad_ok([&] { return project(nvs::layernorm(x, g, b), 13); }, {x, g, b});
}

TEST(Grad, ShapeOps) {
  auto x = random_leaf({2, 3, 4}, 20);
  auto y = random_leaf({2, 2, 4}, 21);
  expect_grad_ok([&] { return project(nvs::reshape(x, {4, -1}), 1); }, {x});
  expect_grad_ok([&] { return project(nvs::permute(x, {2, 0, 1}), 2); }, {x});
  expect_grad_ok([&] { return project(nvs::transpose(x, 0, 2), 3); }, {x});
  expect_grad_ok([&] { return project(nvs::concat<double>({x, y}, 1), 4); }, {x, y});
  expect_grad_ok([&] { return project(nvs::slice(x, 2, 1, 3), 5); }, {x});
  expect_grad_ok([&] { return project(nvs::pad2d(x, 1, 0, 2, 1), 6); }, {x});
  expect_grad_ok([&] { return project(nvs::upsample_bilinear2x(x), 7); }, {x});
  expect_grad_ok([&] { return project(nvs::box_filter3x3(x), 8); }, {x});
  expect_grad_ok([&] { return project(nvs::scatter_add(x, {2, -1, 0, 2}, 3), 9); }, {x});
  expect_grad_ok([&] { return project(nvs::gather(x, {3, 3, 0}), 10); }, {x});
}

TEST(Grad, MatmulAllTransposes) {
  for (int t = 0; t < 4; ++t) {
    const bool ta = t & 1, tb = t & 2;
    auto a = random_leaf(ta ? Shape{2, 5, 3} : Shape{2, 3, 5}, 30 + t);
    auto b = random_leaf(tb ? Shape{4, 5} : Shape{5, 4}, 40 + t);
    expect_grad_ok([&] { return project(nvs::matmul(a, b, ta, tb), 5); }, {a, b}, t);
  }
}

TEST(Grad, Convolutions) {
  auto x = random_leaf({3, 7, 6}, 50);
  auto w = random_leaf({4, 3, 3, 3}, 51);
  auto b = random_leaf({4}, 52);
  expect_grad_ok([&] { return project(nvs::conv2d(x, w, b, 2, 1), 1); }, {x, w, b});
  auto w1 = random_leaf({5, 3, 1, 1}, 53);
  expect_grad_ok([&] { return project(nvs::conv2d(x, w1, TD(), 1, 0), 2); }, {x, w1});
  auto xb = random_leaf({2, 3, 5, 5}, 54);
  expect_grad_ok([&] { return project(nvs::conv2d(xb, w, b, 1, 1), 3); }, {xb, w, b});
  auto dw = random_leaf({3, 1, 3, 3}, 55);
  auto db = random_leaf({3}, 56);
  expect_grad_ok([&] { return project(nvs::depthwise_conv2d(x, dw, db, 1), 4); }, {x, dw, db});
}

TEST(Grad, GridSampleImageAndCoords) {
  auto img = random_leaf({2, 5, 6}, 60);
  // Interior, non-integer coordinates keep the bilinear weights differentiable.
  auto xs = TD::from_data({4}, {0.3, 2.7, 4.45, 1.61});
  auto ys = TD::from_data({4}, {0.4, 3.2, 1.55, 2.9});
  xs.set_requires_grad();
  ys.set_requires_grad();
  expect_grad_ok([&] { return project(nvs::grid_sample(img, xs, ys), 1); }, {img, xs, ys});
}

TEST(Forward, Conv2dMatchesDirectLoops) {
  auto x = random_leaf({2, 6, 5}, 70, -1, 1, false);
  auto w = random_leaf({3, 2, 3, 3}, 71, -1, 1, false);
  auto b = random_leaf({3}, 72, -1, 1, false);
  auto y = nvs::conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  for (int o = 0; o < 3; ++o) {
    for (int oy = 0; oy < 3; ++oy) {
      for (int ox = 0; ox < 3; ++ox) {
        double acc = b.value(o);
        for (int c = 0; c < 2; ++c) {
          for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
              const int iy = oy * 2 - 1 + ki, ix = ox * 2 - 1 + kj;
              if (iy < 0 || iy >= 6 || ix < 0 || ix >= 5) continue;
              acc += w.value(((o * 2 + c) * 3 + ki) * 3 + kj) * x.value((c * 6 + iy) * 5 + ix);
            }
          }
        }
        EXPECT_NEAR(y.value((o * 3 + oy) * 3 + ox), acc, 1e-12);
      }
    }
  }
}

TEST(Forward, UpsampleHalfPixelWeights) {
  // 1-D ramp [0, 1]: outputs at half-pixel centres are 0, 0.25, 0.75, 1.
  auto x = TD::from_data({1, 2}, {0.0, 1.0});
  auto y = nvs::upsample_bilinear2x(x);
  ASSERT_EQ(y.shape(), (Shape{2, 4}));
  const double want[] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(y.value(i), want[i]);
    EXPECT_DOUBLE_EQ(y.value(4 + i), want[i]);
  }
}

TEST(Forward, BoxFilterReflects) {
  auto x = TD::from_data({2, 2}, {1, 2, 3, 4});
  auto y = nvs::box_filter3x3(x);
  // Reflection of a 2x2 plane repeats the opposite pixel: the window at (0,0)
  // holds itself once, its row and column neighbours twice, the diagonal 4 times.
  EXPECT_DOUBLE_EQ(y.value(0), (1 + 2 * 2 + 2 * 3 + 4 * 4) / 9.0);
}

TEST(Forward, SoftmaxRowsSumToOneAndStable) {
  auto x = TD::from_data({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  auto y = nvs::softmax(x);
  for (int r = 0; r < 2; ++r) {
    EXPECT_NEAR(y.value(3 * r) + y.value(3 * r + 1) + y.value(3 * r + 2), 1.0, 1e-12);
  }
  EXPECT_FALSE(std::isnan(y.value(0)));
}

TEST(Forward, FloatAndDoubleAgree) {
  auto xd = random_leaf({3, 8, 8}, 80, -1, 1, false);
  auto wd = random_leaf({4, 3, 3, 3}, 81, -1, 1, false);
  std::vector<float> xf(xd.values().begin(), xd.values().end());
  std::vector<float> wf(wd.values().begin(), wd.values().end());
  auto yd = nvs::gelu(nvs::conv2d(xd, wd, TD(), 1, 1));
  auto yf = nvs::gelu(nvs::conv2d(TF::from_data({3, 8, 8}, xf), TF::from_data({4, 3, 3, 3}, wf),
                                  TF(), 1, 1));
  for (std::int64_t i = 0; i < yd.numel(); ++i) EXPECT_NEAR(yf.value(i), yd.value(i), 1e-5);
}

TEST(Errors, ShapeMismatchesThrow) {
  auto a = random_leaf({2, 3}, 1);
  auto b = random_leaf({4, 5}, 2);
  EXPECT_THROW(nvs::matmul(a, b), nvs::ShapeError);
  EXPECT_THROW(nvs::add(a, b), nvs::ShapeError);
  EXPECT_THROW(nvs::reshape(a, {5}), nvs::ShapeError);
  EXPECT_THROW(nvs::slice(a, 1, 2, 5), nvs::ShapeError);
}

}  // namespace
