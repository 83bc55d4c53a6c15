#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "nvs/losses.hpp"

namespace {

using nvs::LossWeights;
using nvs::RelativePose;
using TD = nvs::Tensor<double>;
using TF = nvs::Tensor<float>;

TD image(int h, int w, std::uint64_t seed, bool grad = false) {
  return nvs::testing::random_leaf({3, h, w}, seed, -1, 1, grad);
}

// Straight-loop SSIM with explicit reflection, inputs in [-1,1].
std::vector<double> naive_ssim(const TD& a, const TD& b) {
  const int c = static_cast<int>(a.dim(0)), h = static_cast<int>(a.dim(1)),
            w = static_cast<int>(a.dim(2));
  auto refl = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  std::vector<double> out(static_cast<std::size_t>(c * h * w));
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int i = (ch * h + refl(y + dy, h)) * w + refl(x + dx, w);
            const double va = 0.5 * a.value(i) + 0.5, vb = 0.5 * b.value(i) + 0.5;
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double ma = sa / 9, mb = sb / 9;
        const double va = saa / 9 - ma * ma, vb = sbb / 9 - mb * mb, cov = sab / 9 - ma * mb;
        const double c1 = 1e-4, c2 = 9e-4;
        out[static_cast<std::size_t>((ch * h + y) * w + x)] =
            (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

nvs::OutOfViewMask half_mask(int h, int w) {
  nvs::OutOfViewMask m;
  m.width = w;
  m.height = h;
  m.o.assign(static_cast<std::size_t>(h * w), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = w / 2; x < w; ++x) m.o[static_cast<std::size_t>(y * w + x)] = 1;
  }
  return m;
}

RelativePose small_motion(double tx, double angle) {
  RelativePose p;
  p.R = nvs::rodrigues(Eigen::Vector3d(0.1, 1, 0.2).normalized(), angle);
  p.t = Eigen::Vector3d(tx, 0.02, 0.03);
  return p;
}

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.alpha, 0.85);
  EXPECT_EQ(w.smooth, 1e-3);
  EXPECT_EQ(w.perceptual, 1.0);
  EXPECT_EQ(w.adversarial, 0.1);
  EXPECT_EQ(w.ts_in, 1.0);
  EXPECT_EQ(w.ts_out, 1.0);
  w.ts_in = -1;
  EXPECT_THROW(w.validate(), nvs::ValidationError);
}

TEST(Ssim, SelfSimilarityIsOne) {
  const TD x = image(8, 9, 1);
  EXPECT_NEAR(nvs::ssim(x, x).item(), 1.0, 1e-12);
  const TF xf = TF::from_data({3, 8, 9}, std::vector<float>(x.values().begin(), x.values().end()));
  EXPECT_NEAR(nvs::ssim(xf, xf).item(), 1.0f, 1e-6);
}

TEST(Ssim, MatchesNaiveLoops) {
  const TD a = image(7, 6, 2), b = image(7, 6, 3);
  const TD m = nvs::ssim_map(a, b);
  const auto ref = naive_ssim(a, b);
  for (std::int64_t i = 0; i < m.numel(); ++i) EXPECT_NEAR(m.value(i), ref[static_cast<std::size_t>(i)], 1e-12);
}

TEST(Ssim, CheckerboardAgainstInverseIsNegative) {
  std::vector<double> v(3 * 8 * 8), inv(v.size());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const std::size_t i = static_cast<std::size_t>((c * 8 + y) * 8 + x);
        v[i] = ((x + y) % 2) ? 1.0 : -1.0;  // 1 and 0 in unit range
        inv[i] = -v[i];
      }
    }
  }
  const TD a = TD::from_data({3, 8, 8}, v), b = TD::from_data({3, 8, 8}, inv);
  const double s = nvs::ssim(a, b).item();
  EXPECT_LT(s, 0.0);
  EXPECT_NEAR(s, mean_of(naive_ssim(a, b)), 1e-12);
}

TEST(Ssim, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TD a = image(6, 6, 10 + seed), b = image(6, 6, 40 + seed);
    EXPECT_NEAR(nvs::ssim(a, b).item(), nvs::ssim(b, a).item(), 1e-7);
    const TD m = nvs::ssim_map(a, b);
    for (std::int64_t i = 0; i < m.numel(); ++i) {
      ASSERT_GE(m.value(i), -1.0);
      ASSERT_LE(m.value(i), 1.0 + 1e-12);
    }
  }
  EXPECT_THROW(nvs::ssim(image(4, 4, 1), image(4, 5, 1)), nvs::ShapeError);
}

TEST(Ssim, Gradcheck) {
  TD a = image(5, 6, 5, true), b = image(5, 6, 6, true);
  const auto r = nvs::testing::gradcheck([&] { return nvs::ssim(a, b); }, {a, b});
  EXPECT_TRUE(r.ok) << r.failure;
}

TEST(InverseWarp, PlaneTranslationShiftsByDisparity) {
  // Plane at depth 2, f = 16: a 0.25 sideways move shifts by fx*tx/z = 2 px.
  const auto cam = nvs::default_camera(32);
  const TD src = image(32, 32, 7);
  const TD depth = TD::full({32, 32}, 2.0);
  RelativePose p;
  p.t = Eigen::Vector3d(0.25, 0, 0);
  const TD out = nvs::inverse_warp(src, depth, cam, p);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 30; ++x) {
        ASSERT_NEAR(out.value((c * 32 + y) * 32 + x), src.value((c * 32 + y) * 32 + x + 2), 1e-12);
      }
    }
  }
}

TEST(InverseWarp, IdentityReturnsSource) {
  const auto cam = nvs::default_camera(16);
  const TD src = image(16, 16, 8);
  const TD out = nvs::inverse_warp(src, TD::full({16, 16}, 3.0), cam, RelativePose::identity());
  for (std::int64_t i = 0; i < src.numel(); ++i) ASSERT_EQ(out.value(i), src.value(i));
}

TEST(InverseWarp, GradcheckWrtDepthAndImage) {
  const auto cam = nvs::default_camera(8);
  TD src = image(8, 8, 9, true);
  TD depth = nvs::testing::random_leaf({8, 8}, 10, 1.5, 3.0);
  const RelativePose p = small_motion(0.1, 0.03);
  const auto r = nvs::testing::gradcheck(
      [&] { return nvs::testing::project(nvs::inverse_warp(src, depth, cam, p), 2); },
      {src, depth});
  EXPECT_TRUE(r.ok) << r.failure;
}

TEST(DepthLoss, IdentityPoseIdenticalFramesIsZero) {
  const auto cam = nvs::default_camera(16);
  const TD ref = image(16, 16, 11);
  TD depth = nvs::testing::random_leaf({16, 16}, 12, 1, 4);
  const auto l = nvs::depth_loss(ref, {ref}, {RelativePose::identity()}, depth, cam, LossWeights{});
  EXPECT_EQ(l.reprojection.item(), 0.0);
}

TEST(DepthLoss, ConstantDisparityHasNoSmoothnessCost) {
  const TD ref = image(12, 10, 13);
  EXPECT_EQ(nvs::smoothness_loss(TD::full({12, 10}, 2.5), ref).item(), 0.0);
  const TD noisy = nvs::testing::random_leaf({12, 10}, 14, 1, 4);
  EXPECT_GT(nvs::smoothness_loss(noisy, ref).item(), 0.0);
}

TEST(DepthLoss, ZeroForIdenticalFramesAndConstantDepth) {
  const auto cam = nvs::default_camera(16);
  const TD ref = image(16, 16, 15);
  const auto l = nvs::depth_loss(ref, {ref, ref}, {RelativePose::identity(), RelativePose::identity()},
                                 TD::full({16, 16}, 2.0), cam, LossWeights{});
  EXPECT_EQ(l.total.item(), 0.0);
}

TEST(DepthLoss, MinimumOverNeighboursWithAutoMask) {
  const auto cam = nvs::default_camera(16);
  const TD ref = image(16, 16, 16);
  const TD n1 = image(16, 16, 17), n2 = image(16, 16, 18);
  const TD depth = nvs::testing::random_leaf({16, 16}, 19, 1.5, 3);
  const std::vector<RelativePose> poses{small_motion(0.1, 0.02), small_motion(-0.15, -0.03)};
  LossWeights w;
  const auto l = nvs::depth_loss(ref, {n1, n2}, poses, depth, cam, w);
  const TD r1 = nvs::photometric_error(ref, nvs::inverse_warp(n1, depth, cam, poses[0]), w.alpha);
  const TD r2 = nvs::photometric_error(ref, nvs::inverse_warp(n2, depth, cam, poses[1]), w.alpha);
  const TD i1 = nvs::photometric_error(ref, n1, w.alpha);
  const TD i2 = nvs::photometric_error(ref, n2, w.alpha);
  double acc = 0;
  int kept = 0;
  for (std::int64_t p = 0; p < 256; ++p) {
    const double m = std::min(r1.value(p), r2.value(p));
    ASSERT_LE(m, r1.value(p));
    ASSERT_LE(m, r2.value(p));
    if (m < std::min(i1.value(p), i2.value(p))) {
      acc += m;
      ++kept;
    }
  }
  ASSERT_GT(kept, 0);
  EXPECT_NEAR(l.reprojection.item(), acc / kept, 1e-12);
  EXPECT_NEAR(l.kept_fraction, kept / 256.0, 1e-15);
  EXPECT_NEAR(l.total.item(), l.reprojection.item() + 1e-3 * l.smoothness.item(), 1e-15);
}

TEST(DepthLoss, PhotometricErrorFormula) {
  const TD a = image(5, 5, 20), b = image(5, 5, 21);
  const TD e = nvs::photometric_error(a, b, 0.85);
  const auto s = naive_ssim(a, b);
  for (int p = 0; p < 25; ++p) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = static_cast<std::size_t>(c * 25 + p);
      acc += 0.425 * (1 - s[i]) + 0.15 * 0.5 * std::abs(a.value(c * 25 + p) - b.value(c * 25 + p));
    }
    EXPECT_NEAR(e.value(p), acc / 3, 1e-12);
  }
}

TEST(DepthLoss, GradcheckWrtDepth) {
  const auto cam = nvs::default_camera(8);
  const TD ref = image(8, 8, 22), n1 = image(8, 8, 23);
  TD depth = nvs::testing::random_leaf({8, 8}, 24, 1.5, 3.0);
  const RelativePose p = small_motion(0.2, 0.05);
  const auto r = nvs::testing::gradcheck(
      [&] {
        // Reprojection + smoothness without the auto-mask selection step.
        const TD rep = nvs::photometric_error(ref, nvs::inverse_warp(n1, depth, cam, p), 0.85);
        return nvs::add(nvs::mean(rep), nvs::smoothness_loss(depth, ref));
      },
      {depth});
  EXPECT_TRUE(r.ok) << r.failure;
}

TEST(DepthLoss, RejectsMissingPose) {
  const auto cam = nvs::default_camera(8);
  const TD ref = image(8, 8, 25);
  EXPECT_THROW(nvs::depth_loss(ref, {ref, ref}, {RelativePose::identity()}, TD::full({8, 8}, 1.0),
                               cam, LossWeights{}),
               nvs::DomainError);
  EXPECT_THROW(nvs::depth_loss(ref, {}, {}, TD::full({8, 8}, 1.0), cam, LossWeights{}),
               nvs::DomainError);
}

TEST(TsLoss, IdenticalMapsGiveMinusTwo) {
  const TD h = nvs::testing::random_leaf({6, 4, 4}, 30, -1, 1, false);
  const auto l = nvs::ts_loss(h, h, half_mask(4, 4), LossWeights{});
  EXPECT_NEAR(l.total.item(), -2.0, 1e-12);
  EXPECT_NEAR(l.in.item(), -1.0, 1e-12);
  EXPECT_NEAR(l.out.item(), -1.0, 1e-12);
}

TEST(TsLoss, DetachGatesGradients) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TD he = nvs::testing::random_leaf({5, 4, 4}, 31 + seed);
    TD hi = nvs::testing::random_leaf({5, 4, 4}, 61 + seed);
    const auto mask = half_mask(4, 4);
    nvs::ts_loss(he, hi, mask, LossWeights{}).in.backward();
    for (double g : he.grad_or_zeros()) ASSERT_EQ(g, 0.0);
    bool any = false;
    for (double g : hi.grad_or_zeros()) any = any || g != 0.0;
    EXPECT_TRUE(any);
    he.zero_grad();
    hi.zero_grad();
    nvs::ts_loss(he, hi, mask, LossWeights{}).out.backward();
    for (double g : hi.grad_or_zeros()) ASSERT_EQ(g, 0.0);
    any = false;
    for (double g : he.grad_or_zeros()) any = any || g != 0.0;
    EXPECT_TRUE(any);
  }
}

TEST(TsLoss, WithoutDetachBothMapsReceiveGradient) {
  TD he = nvs::testing::random_leaf({5, 4, 4}, 70);
  TD hi = nvs::testing::random_leaf({5, 4, 4}, 71);
  nvs::ts_loss(he, hi, half_mask(4, 4), LossWeights{}, false).in.backward();
  bool e = false, i = false;
  for (double g : he.grad_or_zeros()) e = e || g != 0.0;
  for (double g : hi.grad_or_zeros()) i = i || g != 0.0;
  EXPECT_TRUE(e);
  EXPECT_TRUE(i);
}

TEST(TsLoss, EmptyRegionsContributeZero) {
  const TD he = nvs::testing::random_leaf({5, 3, 3}, 72, -1, 1, false);
  const TD hi = nvs::testing::random_leaf({5, 3, 3}, 73, -1, 1, false);
  nvs::OutOfViewMask none;
  none.width = 3;
  none.height = 3;
  none.o.assign(9, 0);
  const auto l = nvs::ts_loss(he, hi, none, LossWeights{});
  EXPECT_EQ(l.out.item(), 0.0);
  EXPECT_EQ(l.total.item(), l.in.item());
  nvs::OutOfViewMask all = none;
  all.o.assign(9, 1);
  EXPECT_EQ(nvs::ts_loss(he, hi, all, LossWeights{}).in.item(), 0.0);
}

TEST(TsLoss, InTermIgnoresMaskedOutPixels) {
  const TD he = nvs::testing::random_leaf({5, 4, 4}, 74, -1, 1, false);
  const TD hi = nvs::testing::random_leaf({5, 4, 4}, 75, -1, 1, false);
  const auto mask = half_mask(4, 4);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.1, 10);
  std::vector<double> scaled(hi.values().begin(), hi.values().end());
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      if (!mask.o[static_cast<std::size_t>(y * 4 + x)]) continue;
      const double s = u(gen);
      for (int c = 0; c < 5; ++c) scaled[static_cast<std::size_t>(c * 16 + y * 4 + x)] *= s;
    }
  }
  const TD hi2 = TD::from_data({5, 4, 4}, scaled);
  EXPECT_NEAR(nvs::ts_loss(he, hi, mask, LossWeights{}).in.item(),
              nvs::ts_loss(he, hi2, mask, LossWeights{}).in.item(), 1e-14);
}

TEST(TsLoss, MatchesDirectCosine) {
  const TD he = nvs::testing::random_leaf({4, 3, 3}, 76, -1, 1, false);
  const TD hi = nvs::testing::random_leaf({4, 3, 3}, 77, -1, 1, false);
  nvs::OutOfViewMask m;
  m.width = 3;
  m.height = 3;
  m.o = {1, 0, 0, 1, 1, 0, 0, 0, 1};
  LossWeights w;
  w.ts_in = 0.7;
  w.ts_out = 0.4;
  const auto l = nvs::ts_loss(he, hi, m, w);
  double sin = 0, sout = 0;
  int nin = 0, nout = 0;
  for (int p = 0; p < 9; ++p) {
    double d = 0, a = 0, b = 0;
    for (int c = 0; c < 4; ++c) {
      d += he.value(c * 9 + p) * hi.value(c * 9 + p);
      a += he.value(c * 9 + p) * he.value(c * 9 + p);
      b += hi.value(c * 9 + p) * hi.value(c * 9 + p);
    }
    const double cs = d / std::sqrt(a * b);
    if (m.o[static_cast<std::size_t>(p)]) {
      sout += cs;
      ++nout;
    } else {
      sin += cs;
      ++nin;
    }
  }
  EXPECT_NEAR(l.in.item(), -sin / nin, 1e-12);
  EXPECT_NEAR(l.out.item(), -sout / nout, 1e-12);
  EXPECT_NEAR(l.total.item(), -0.7 * sin / nin - 0.4 * sout / nout, 1e-12);
}

TEST(TsLoss, Gradcheck) {
  TD he = nvs::testing::random_leaf({4, 3, 4}, 78);
  TD hi = nvs::testing::random_leaf({4, 3, 4}, 79);
  const auto mask = half_mask(3, 4);
  const auto r = nvs::testing::gradcheck(
      [&] { return nvs::ts_loss(he, hi, mask, LossWeights{}, false).total; }, {he, hi});
  EXPECT_TRUE(r.ok) << r.failure;
}

TEST(Reconstruction, L1AndPerceptual) {
  nvs::PerceptualExtractor<double> ex(5);
  const TD a = nvs::testing::random_leaf({3, 16, 16}, 80, 0, 0.9, false);
  const auto same = nvs::l1_and_perceptual(a, a, ex);
  EXPECT_EQ(same.l1.item(), 0.0);
  EXPECT_EQ(same.perceptual.item(), 0.0);
  const TD b = nvs::affine(a, 1.0, 16.0 / 255.0);
  const auto l = nvs::l1_and_perceptual(b, a, ex);
  EXPECT_NEAR(l.l1.item(), 16.0 / 255.0, 1e-12);
  EXPECT_GT(l.perceptual.item(), 0.0);
  const auto sw = nvs::l1_and_perceptual(a, b, ex);
  EXPECT_EQ(sw.l1.item(), l.l1.item());
  EXPECT_NEAR(sw.perceptual.item(), l.perceptual.item(), 1e-15);
}

TEST(Reconstruction, ExtractorIsFrozenButPassesGradient) {
  nvs::PerceptualExtractor<double> ex(6);
  TD pred = nvs::testing::random_leaf({3, 8, 8}, 81);
  const TD gt = nvs::testing::random_leaf({3, 8, 8}, 82, -1, 1, false);
  const auto r = nvs::testing::gradcheck(
      [&] { return nvs::l1_and_perceptual(pred, gt, ex).perceptual; }, {pred});
  EXPECT_TRUE(r.ok) << r.failure;
}

TEST(Adversarial, ZeroDiscriminatorSitsAtHingeMargin) {
  nvs::Discriminators<double> d(7, 4);
  for (auto& t : d.params().tensors()) {
    auto tt = t;
    for (auto& v : tt.mutable_values()) v = 0;
  }
  const TD fake = image(16, 16, 83), real = image(16, 16, 84);
  const auto l = nvs::adversarial_losses(fake, real, d, nvs::CropWindow{3, 5, 8});
  EXPECT_EQ(l.d_loss.item(), 4.0);  // 2 per discriminator
  EXPECT_EQ(l.g_loss.item(), 0.0);
}

TEST(Adversarial, DiscriminatorLossDoesNotReachGenerator) {
  nvs::Discriminators<double> d(8, 4);
  TD gen = nvs::testing::random_leaf({3, 16, 16}, 85);
  const TD fake = nvs::tanh(gen);
  nvs::adversarial_losses(fake, image(16, 16, 86), d, nvs::CropWindow{0, 0, 8}).d_loss.backward();
  for (double g : gen.grad_or_zeros()) ASSERT_EQ(g, 0.0);
  bool any = false;
  for (const auto& t : d.params().tensors()) {
    for (double g : t.grad_or_zeros()) any = any || g != 0.0;
  }
  EXPECT_TRUE(any);
}

TEST(Adversarial, GeneratorLossFallsAsFakeScoreRises) {
  nvs::Discriminators<double> d(9, 4);
  const TD fake = image(16, 16, 87), real = image(16, 16, 88);
  const nvs::CropWindow win{4, 4, 8};
  double prev = nvs::adversarial_losses(fake, real, d, win).g_loss.item();
  for (int step = 0; step < 5; ++step) {
    for (auto* disc : {&d.global, &d.local}) {
      auto b = disc->layers.back().b;
      b.mutable_values()[0] += 0.25;
    }
    const double cur = nvs::adversarial_losses(fake, real, d, win).g_loss.item();
    EXPECT_NEAR(cur, prev - 0.5, 1e-12);
    prev = cur;
  }
}

TEST(Adversarial, CropIsHalfExtentAndInside) {
  nvs::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto c = nvs::random_crop(64, 64, rng);
    ASSERT_EQ(c.size, 32);
    ASSERT_GE(c.x, 0);
    ASSERT_LE(c.x + c.size, 64);
    ASSERT_LE(c.y + c.size, 64);
  }
}

TEST(TotalLoss, BookkeepingAndAblation) {
  LossWeights w;
  nvs::TsLoss<double> zero_ts{TD::scalar(0), TD::scalar(0), TD::scalar(0)};
  nvs::ViewLossReport rep;
  EXPECT_EQ(nvs::total_view_loss(TD::scalar(0), TD::scalar(0), TD::scalar(0), zero_ts, w, &rep).item(),
            0.0);
  const TD l1 = TD::scalar(0.3), pc = TD::scalar(0.7), adv = TD::scalar(-0.4);
  nvs::TsLoss<double> ts{TD::scalar(-0.8), TD::scalar(-0.5), TD()};
  const double total = nvs::total_view_loss(l1, pc, adv, ts, w, &rep).item();
  EXPECT_NEAR(total, rep.l1 + w.perceptual * rep.perceptual + w.adversarial * rep.adversarial +
                         w.ts_in * rep.ts_in + w.ts_out * rep.ts_out, 1e-12);
  EXPECT_NEAR(rep.total, total, 1e-15);
  w.ts_in = w.ts_out = 0;
  EXPECT_NEAR(nvs::total_view_loss(l1, pc, adv, ts, w).item(), 0.3 + 0.7 - 0.04, 1e-12);
}

}  // namespace
