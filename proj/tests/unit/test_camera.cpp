#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "nvs/camera.hpp"
#include "nvs/errors.hpp"

namespace {

using nvs::CameraModel;
using nvs::RelativePose;

Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double lo, double hi) {
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  // Independent construction through Eigen's AngleAxis, not the code under test.
  return Eigen::AngleAxisd(u(rng), axis.normalized()).toRotationMatrix();
}

TEST(Unproject, LinearSolveOracle) {
  CameraModel cam{2, 2, 0, 0, 3, 1};
  auto maps = nvs::unproject(cam, {3, 3, 3});
  const Eigen::Vector3d p(2, 0, 1);
  const Eigen::Vector3d want = cam.K().fullPivLu().solve(p);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(maps.x_img[6 + k], want(k), 1e-15);
  EXPECT_DOUBLE_EQ(maps.x_w[6], 3.0);
  EXPECT_DOUBLE_EQ(maps.x_w[7], 0.0);
  EXPECT_DOUBLE_EQ(maps.x_w[8], 3.0);
}

TEST(Unproject, PrincipalRayAndExactProduct) {
  const auto cam = nvs::default_camera(16);
  std::vector<double> depth(256);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = 1.0 + 0.01 * static_cast<double>(i);
  auto maps = nvs::unproject(cam, depth);
  const std::size_t pc = 8 * 16 + 8;
  EXPECT_EQ(maps.x_w[3 * pc], 0.0);
  EXPECT_EQ(maps.x_w[3 * pc + 1], 0.0);
  EXPECT_EQ(maps.x_w[3 * pc + 2], depth[pc]);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    EXPECT_EQ(maps.x_img[3 * i + 2], 1.0);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(maps.x_w[3 * i + k], depth[i] * maps.x_img[3 * i + k]);
  }
}

TEST(Unproject, RejectsNonPositiveDepth) {
  const auto cam = nvs::default_camera(4);
  std::vector<double> depth(16, 1.0);
  depth[5] = 0.0;
  EXPECT_THROW(nvs::unproject(cam, depth), nvs::DomainError);
  EXPECT_THROW(nvs::unproject(cam, std::vector<double>(3, 1.0)), nvs::DomainError);
}

TEST(Unproject, ProjectRoundTripRandomPixels) {
  const auto cam = nvs::default_camera(64);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pix(0, 63);
  std::uniform_real_distribution<double> dep(0.5, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int u = pix(rng), v = pix(rng);
    const double d = dep(rng);
    const Eigen::Vector3d x = d * cam.K().inverse() * Eigen::Vector3d(u, v, 1);
    double pu = 0, pv = 0;
    ASSERT_TRUE(nvs::project_point(cam, x, pu, pv));
    EXPECT_NEAR(pu, u, 1e-6);
    EXPECT_NEAR(pv, v, 1e-6);
  }
}

TEST(Reproject, IdentityIsExactlyZeroFlow) {
  const auto cam = nvs::default_camera(16);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dep(1.0, 9.0);
  std::vector<double> depth(256);
  for (auto& d : depth) d = dep(rng);
  auto f = nvs::reproject(cam, nvs::unproject(cam, depth), RelativePose::identity());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    EXPECT_EQ(f.flow_x[i], 0.0);
    EXPECT_EQ(f.flow_y[i], 0.0);
    EXPECT_EQ(f.target_depth[i], depth[i]);
    EXPECT_TRUE(f.valid[i]);
  }
}

TEST(Reproject, PureTranslationGivesUniformHalfWidthFlow) {
  const auto cam = nvs::default_camera(16);
  const double d = 4.0;
  RelativePose pose;
  pose.t = Eigen::Vector3d(d * cam.width / (2 * cam.fx), 0, 0);
  auto f = nvs::reproject(cam, nvs::unproject(cam, std::vector<double>(256, d)), pose);
  for (std::size_t i = 0; i < 256; ++i) {
    // Brute-force oracle: project the translated point directly.
    const double u = static_cast<double>(i % 16), v = static_cast<double>(i / 16);
    const Eigen::Vector3d x = d * cam.K().inverse() * Eigen::Vector3d(u, v, 1) + pose.t;
    const Eigen::Vector3d p = cam.K() * x / x(2);
    EXPECT_NEAR(f.target_x[i], p(0), 1e-12);
    EXPECT_NEAR(f.flow_x[i], 8.0, 1e-12);
    EXPECT_NEAR(f.flow_y[i], 0.0, 1e-12);
  }
}

TEST(Reproject, HalfTurnAboutOpticalAxisReflectsThroughPrincipalPoint) {
  const auto cam = nvs::default_camera(16);
  RelativePose pose;
  pose.R = Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  auto f = nvs::reproject(cam, nvs::unproject(cam, std::vector<double>(256, 2.0)), pose);
  for (std::size_t i = 0; i < 256; ++i) {
    const double u = static_cast<double>(i % 16), v = static_cast<double>(i / 16);
    EXPECT_NEAR(f.target_x[i], 2 * cam.cx - u, 1e-9);
    EXPECT_NEAR(f.target_y[i], 2 * cam.cy - v, 1e-9);
  }
}

TEST(Reproject, BehindCameraFlaggedInvalid) {
  const auto cam = nvs::default_camera(4);
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, -5);
  auto f = nvs::reproject(cam, nvs::unproject(cam, std::vector<double>(16, 2.0)), pose);
  for (auto v : f.valid) EXPECT_FALSE(v);
}

TEST(Reproject, ForwardThenInverseReturnsHome) {
  const auto cam = nvs::default_camera(32);
  const double d = 5.0;
  RelativePose pose;
  pose.R = Eigen::AngleAxisd(0.1, Eigen::Vector3d(0.2, 1, 0).normalized()).toRotationMatrix();
  pose.t = Eigen::Vector3d(0.3, -0.1, 0.2);
  auto maps = nvs::unproject(cam, std::vector<double>(32 * 32, d));
  auto f = nvs::reproject(cam, maps, pose);
  const RelativePose inv = pose.inverse();
  int checked = 0;
  for (std::size_t i = 0; i < f.valid.size(); ++i) {
    if (!f.valid[i]) continue;
    // Re-unproject the landing point with its target depth, then map back.
    const Eigen::Vector3d xt =
        f.target_depth[i] * cam.K().inverse() * Eigen::Vector3d(f.target_x[i], f.target_y[i], 1);
    double u = 0, v = 0;
    ASSERT_TRUE(nvs::project_point(cam, inv.R * xt + inv.t, u, v));
    EXPECT_NEAR(u, static_cast<double>(i % 32), 0.01);
    EXPECT_NEAR(v, static_cast<double>(i / 32), 0.01);
    ++checked;
  }
  EXPECT_GT(checked, 500);
}

TEST(AxisAngle, Identity) {
  auto p = nvs::rotation_to_axis_angle(Eigen::Matrix3d::Identity());
  EXPECT_EQ(p.theta, 0.0);
  EXPECT_EQ(p.axis, Eigen::Vector3d::Zero());
}

TEST(AxisAngle, QuarterTurnAboutZ) {
  Eigen::Matrix3d rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  auto p = nvs::rotation_to_axis_angle(rz);
  EXPECT_NEAR(p.theta, M_PI / 2, 1e-15);
  EXPECT_NEAR((p.axis - Eigen::Vector3d::UnitZ()).norm(), 0.0, 1e-15);
  EXPECT_NEAR((nvs::rodrigues(p.axis, p.theta) - rz).norm(), 0.0, 1e-12);
}

TEST(AxisAngle, RoundTrip500Rotations) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Matrix3d R = random_rotation(rng, 0.01, M_PI - 0.01);
    auto p = nvs::rotation_to_axis_angle(R);
    EXPECT_NEAR(p.axis.norm(), 1.0, 1e-12);
    EXPECT_LT((nvs::rodrigues(p.axis, p.theta) - R).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(AxisAngle, HalfTurnFallback) {
  const Eigen::Vector3d a = Eigen::Vector3d(1, 2, -2).normalized();
  const Eigen::Matrix3d R = Eigen::AngleAxisd(M_PI, a).toRotationMatrix();
  auto p = nvs::rotation_to_axis_angle(R);
  EXPECT_NEAR(p.theta, M_PI, 1e-12);
  EXPECT_LT((nvs::rodrigues(p.axis, p.theta) - R).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AxisAngle, RejectsNonRotation) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 1) = 0.1;
  EXPECT_THROW(nvs::rotation_to_axis_angle(m), nvs::ValidationError);
  EXPECT_THROW(nvs::rotation_to_axis_angle(-Eigen::Matrix3d::Identity()), nvs::ValidationError);
}

TEST(Intrinsics, ScaleQuarter) {
  CameraModel c{128, 128, 128, 128, 256, 256};
  auto s = nvs::scale_intrinsics(c, 0.25);
  EXPECT_EQ(s.width, 64);
  EXPECT_EQ(s.height, 64);
  EXPECT_DOUBLE_EQ(s.fx, 32);
  EXPECT_DOUBLE_EQ(s.cx, 32);
  auto same = nvs::scale_intrinsics(c, 1.0);
  EXPECT_EQ(same.K(), c.K());
  EXPECT_THROW(nvs::scale_intrinsics(nvs::default_camera(10), 0.25), nvs::DomainError);
  // The scaled principal point still unprojects to the optical axis.
  auto m = nvs::unproject(s, std::vector<double>(64 * 64, 1.0));
  const std::size_t pc = 32 * 64 + 32;
  EXPECT_EQ(m.x_img[3 * pc], 0.0);
  EXPECT_EQ(m.x_img[3 * pc + 1], 0.0);
}

TEST(Intrinsics, ReprojectionConsistentAcrossScales) {
  const auto full = nvs::default_camera(64);
  const auto quarter = nvs::scale_intrinsics(full, 0.25);
  RelativePose pose;
  pose.R = Eigen::AngleAxisd(0.2, Eigen::Vector3d::UnitY()).toRotationMatrix();
  pose.t = Eigen::Vector3d(0.4, 0.0, 0.1);
  std::vector<double> depth(64 * 64);
  for (int v = 0; v < 64; ++v) {
    for (int u = 0; u < 64; ++u) depth[v * 64 + u] = 2.0 + 0.03 * u + 0.01 * v;
  }
  auto ff = nvs::reproject(full, nvs::unproject(full, depth), pose);
  auto fq = nvs::reproject(quarter, nvs::unproject(quarter, nvs::downsample_depth(depth, 64, 64, 4)),
                           pose);
  for (int v = 0; v < 16; ++v) {
    for (int u = 0; u < 16; ++u) {
      const std::size_t iq = v * 16 + u, ifl = (4 * v) * 64 + 4 * u;
      EXPECT_NEAR(fq.target_x[iq] * 4, ff.target_x[ifl], 1e-6);
      EXPECT_NEAR(fq.target_y[iq] * 4, ff.target_y[ifl], 1e-6);
    }
  }
}

}  // namespace
