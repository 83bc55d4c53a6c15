#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "gradcheck.hpp"
#include "nvs/errors.hpp"
#include "nvs/ops.hpp"
#include "nvs/warp.hpp"

namespace {

using TD = nvs::Tensor<double>;
using TF = nvs::Tensor<float>;

nvs::FlowField uniform_flow(int w, int h, double dx, double dy) {
  nvs::FlowField f;
  f.width = w;
  f.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  f.valid.assign(n, 1);
  f.target_depth.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i % w), v = static_cast<double>(i / w);
    f.target_x.push_back(u + dx);
    f.target_y.push_back(v + dy);
    f.flow_x.push_back(dx);
    f.flow_y.push_back(dy);
  }
  return f;
}

TF random_features(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  std::vector<float> v(static_cast<std::size_t>(c * h * w));
  for (auto& x : v) x = d(rng);
  return TF::from_data({c, h, w}, std::move(v));
}

TEST(Splat, ZeroFlowIsExactIdentity) {
  auto f = random_features(5, 8, 8, 1);
  auto flow = uniform_flow(8, 8, 0, 0);
  auto r = nvs::splat_forward(f, flow, TF::zeros({8, 8}));
  for (std::int64_t i = 0; i < f.numel(); ++i) ASSERT_EQ(r.warped.value(i), f.value(i));
  for (double w : r.weight) EXPECT_EQ(w, 1.0);
}

TEST(Splat, ZeroFlowWithDepthImportanceIsExactIdentity) {
  auto f = random_features(3, 8, 8, 2);
  auto flow = uniform_flow(8, 8, 0, 0);
  for (std::size_t i = 0; i < flow.target_depth.size(); ++i) flow.target_depth[i] = 1.0 + 0.37 * i;
  auto r = nvs::splat_forward(f, flow, nvs::depth_importance<float>(flow));
  for (std::int64_t i = 0; i < f.numel(); ++i) ASSERT_EQ(r.warped.value(i), f.value(i));
}

TEST(Splat, UnitShiftRightMatchesNaiveScatter) {
  auto f = random_features(2, 6, 7, 3);
  auto r = nvs::splat_forward(f, uniform_flow(7, 6, 1, 0), TF::zeros({6, 7}));
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 7; ++x) {
        const float want = x == 0 ? 0.0f : f.value((c * 6 + y) * 7 + x - 1);
        EXPECT_EQ(r.warped.value((c * 6 + y) * 7 + x), want);
      }
    }
  }
  for (int y = 0; y < 6; ++y) EXPECT_EQ(r.weight[y * 7], 0.0);
}

TEST(Splat, NearerSourceWinsAsSharpnessGrows) {
  // Two sources landing on target 0 with importances i1 > i2: the result is
  // the two-term softmax average, approaching source 1.
  nvs::FlowField flow = uniform_flow(2, 1, 0, 0);
  flow.target_x = {0, 0};
  auto feat = TD::from_data({1, 1, 2}, {3.0, -1.0});
  auto imp = TD::from_data({1, 2}, {-1.0, -1.5});
  double prev_err = 1e9;
  for (double alpha : {0.5, 2.0, 10.0, 40.0}) {
    auto r = nvs::splat_forward(feat, flow, imp, alpha);
    const double w1 = std::exp(alpha * -1.0), w2 = std::exp(alpha * -1.5);
    EXPECT_NEAR(r.warped.value(0), (3.0 * w1 - 1.0 * w2) / (w1 + w2), 1e-12);
    const double err = std::abs(r.warped.value(0) - 3.0);
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
  EXPECT_LT(prev_err, 1e-7);
}

TEST(Splat, ConstantFieldStaysConstantWhereCovered) {
  nvs::FlowField flow = uniform_flow(9, 9, 0, 0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1.3, 1.3);
  for (std::size_t i = 0; i < flow.target_x.size(); ++i) {
    flow.target_x[i] += d(rng);
    flow.target_y[i] += d(rng);
    flow.target_depth[i] = 1 + std::abs(d(rng));
  }
  auto feat = TD::full({2, 9, 9}, 0.625);
  auto r = nvs::splat_forward(feat, flow, nvs::depth_importance<double>(flow));
  for (std::size_t p = 0; p < 81; ++p) {
    const double want = r.weight[p] >= nvs::kCoverageThreshold ? 0.625 : 0.0;
    EXPECT_NEAR(r.warped.value(static_cast<std::int64_t>(p)), want, 1e-14);
  }
}

TEST(Splat, ChannelPermutationCommutes) {
  auto f = random_features(3, 5, 5, 6);
  auto flow = uniform_flow(5, 5, 0.4, -0.7);
  auto a = nvs::splat_forward(f, flow, TF::zeros({5, 5})).warped;
  auto fp = nvs::concat<float>({nvs::slice(f, 0, 2, 3), nvs::slice(f, 0, 0, 2)}, 0);
  auto b = nvs::splat_forward(fp, flow, TF::zeros({5, 5})).warped;
  for (int i = 0; i < 25; ++i) {
    EXPECT_EQ(b.value(i), a.value(50 + i));
    EXPECT_EQ(b.value(25 + i), a.value(i));
  }
}

TEST(Splat, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    nvs::FlowField flow = uniform_flow(8, 8, 0, 0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-0.9, 0.9);
    for (std::size_t i = 0; i < 64; ++i) {
      flow.target_x[i] += d(rng);
      flow.target_y[i] += d(rng);
    }
    auto feat = nvs::testing::random_leaf({3, 8, 8}, 10 + seed);
    auto imp = nvs::testing::random_leaf({8, 8}, 20 + seed, -0.3, 0.0);
    auto r = nvs::testing::gradcheck(
        [&] { return nvs::testing::project(nvs::splat_forward(feat, flow, imp).warped, 3); },
        {feat, imp});
    EXPECT_TRUE(r.ok) << r.failure;
  }
}

TEST(Splat, NonFiniteFlowRejected) {
  auto flow = uniform_flow(2, 2, 0, 0);
  flow.target_x[1] = std::nan("");
  EXPECT_THROW(nvs::splat_forward(TF::zeros({1, 2, 2}), flow, TF::zeros({2, 2})), nvs::DomainError);
}

TEST(Mask, IdentityCoversEverything) {
  const auto cam = nvs::default_camera(64);
  auto m = nvs::out_of_view_mask(cam, std::vector<double>(64 * 64, 3.0), nvs::RelativePose::identity());
  EXPECT_EQ(m.width, 16);
  EXPECT_EQ(m.ratio(), 0.0);
}

TEST(Mask, HalfWidthTranslationMatchesBruteForce) {
  const auto cam = nvs::default_camera(64);
  const auto q = nvs::scale_intrinsics(cam, 0.25);
  const double d = 3.0;
  nvs::RelativePose pose;
  pose.t = Eigen::Vector3d(d * q.width / (2 * q.fx), 0, 0);
  auto m = nvs::out_of_view_mask(cam, std::vector<double>(64 * 64, d), pose);
  // Oracle: a target pixel is reached iff some source lands within one pixel.
  int uncovered = 0;
  for (int tv = 0; tv < 16; ++tv) {
    for (int tu = 0; tu < 16; ++tu) {
      bool hit = false;
      for (int v = 0; v < 16 && !hit; ++v) {
        for (int u = 0; u < 16 && !hit; ++u) {
          const Eigen::Vector3d x = d * q.K().inverse() * Eigen::Vector3d(u, v, 1) + pose.t;
          const Eigen::Vector3d p = q.K() * x / x(2);
          hit = std::abs(p(0) - tu) < 1 && std::abs(p(1) - tv) < 1;
        }
      }
      uncovered += hit ? 0 : 1;
      EXPECT_EQ(m.o[tv * 16 + tu], hit ? 0 : 1);
    }
  }
  EXPECT_NEAR(m.ratio(), 0.5, 0.02);
  EXPECT_EQ(m.ratio(), uncovered / 256.0);
}

TEST(Mask, LookingAwayCoversNothing) {
  const auto cam = nvs::default_camera(32);
  nvs::RelativePose pose;
  pose.R = Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitY()).toRotationMatrix();
  auto m = nvs::out_of_view_mask(cam, std::vector<double>(32 * 32, 2.0), pose);
  EXPECT_EQ(m.ratio(), 1.0);
}

TEST(Mask, IndependentOfFeatureContent) {
  auto flow = uniform_flow(6, 6, 1.5, 0.25);
  auto a = nvs::splat_forward(random_features(2, 6, 6, 1), flow, TF::zeros({6, 6}));
  auto b = nvs::splat_forward(random_features(2, 6, 6, 2), flow, TF::zeros({6, 6}));
  EXPECT_EQ(nvs::derive_out_of_view_mask(a.weight, 6, 6).o, nvs::derive_out_of_view_mask(b.weight, 6, 6).o);
  EXPECT_EQ(a.weight, nvs::splat_coverage(flow));
}

}  // namespace
