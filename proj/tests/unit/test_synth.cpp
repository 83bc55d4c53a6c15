#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvs/losses.hpp"
#include "nvs/rng.hpp"
#include "nvs/synth.hpp"
#include "nvs/warp.hpp"

namespace {

namespace fs = std::filesystem;
using nvs::RelativePose;
using nvs::Scene;
using nvs::Split;

std::string temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nvs_test_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Scene single_quad(double z, double half) {
  Scene s;
  nvs::Quad q;
  q.origin = {-half, -half, z};
  q.edge_u = {2 * half, 0, 0};
  q.edge_v = {0, 2 * half, 0};
  s.quads.push_back(q);
  return s;
}

TEST(SceneGen, DeterministicInSeed) {
  const Scene a = nvs::generate_scene(42), b = nvs::generate_scene(42);
  ASSERT_EQ(a.quads.size(), b.quads.size());
  for (std::size_t i = 0; i < a.quads.size(); ++i) {
    EXPECT_EQ(a.quads[i].origin, b.quads[i].origin);
    EXPECT_EQ(a.quads[i].edge_u, b.quads[i].edge_u);
    EXPECT_EQ(a.quads[i].texture.seed, b.quads[i].texture.seed);
  }
  const auto cam = nvs::default_camera(32);
  const auto ra = nvs::rasterize(a, cam, RelativePose::identity());
  const auto rb = nvs::rasterize(b, cam, RelativePose::identity());
  EXPECT_EQ(ra.image.data, rb.image.data);
  EXPECT_EQ(ra.depth, rb.depth);
}

TEST(SceneGen, QuadCountsVaryAcrossSeeds) {
  std::vector<std::size_t> counts;
  for (std::uint64_t s = 0; s < 100; ++s) counts.push_back(nvs::generate_scene(s).quads.size());
  int differ = 0, pairs = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    ASSERT_GE(counts[i], 5u);
    ASSERT_LE(counts[i], 15u);
    for (std::size_t j = i + 1; j < counts.size(); ++j) {
      ++pairs;
      differ += counts[i] != counts[j];
    }
  }
  EXPECT_GE(static_cast<double>(differ) / pairs, 0.9);
}

TEST(SceneGen, EveryScenePassesInvariants) {
  const auto cam = nvs::default_camera(32);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Scene sc = nvs::generate_scene(nvs::derive_seed(11, s));
    ASSERT_TRUE(nvs::scene_valid(sc, cam)) << s;
    // The room box closes the reference frustum: no background pixels.
    const auto r = nvs::rasterize(sc, cam, RelativePose::identity());
    for (double d : r.depth) {
      ASSERT_LT(d, nvs::kBackgroundDepth);
      ASSERT_GE(d, 1.0 - 1e-9);
    }
  }
}

TEST(Rasterize, FrontoParallelQuadHasConstantDepth) {
  const auto cam = nvs::default_camera(32);
  const auto r = nvs::rasterize(single_quad(5.0, 10.0), cam, RelativePose::identity());
  for (double d : r.depth) EXPECT_NEAR(d, 5.0, 1e-12);
}

TEST(Rasterize, NearestSurfaceWins) {
  const auto cam = nvs::default_camera(32);
  Scene s = single_quad(4.0, 10.0);
  nvs::Quad near = single_quad(2.0, 0.5).quads[0];
  near.texture.a = near.texture.b = {1.0f, 0.0f, 0.0f};
  s.quads.push_back(near);
  const auto r = nvs::rasterize(s, cam, RelativePose::identity());
  // Near quad spans |x/z| <= 0.25, i.e. pixels within 4 of the centre.
  EXPECT_NEAR(r.depth[16 * 32 + 16], 2.0, 1e-12);
  EXPECT_EQ(r.image.at(0, 16, 16), 1.0f);
  EXPECT_EQ(r.image.at(1, 16, 16), 0.0f);
  EXPECT_NEAR(r.depth[2 * 32 + 2], 4.0, 1e-12);
}

TEST(Rasterize, BackgroundBeyondGeometry) {
  const auto cam = nvs::default_camera(16);
  Scene s = single_quad(3.0, 0.2);
  s.background = {0.25f, 0.5f, 0.75f};
  const auto r = nvs::rasterize(s, cam, RelativePose::identity());
  EXPECT_EQ(r.depth[0], nvs::kBackgroundDepth);
  EXPECT_EQ(r.image.at(2, 0, 0), 0.75f);
}

// Warp the target render back with reference depth; compare on pixels whose
// reprojection lands inside the target and is not occluded there.
TEST(Rasterize, CrossViewConsistency) {
  const int size = 64;
  const auto cam = nvs::default_camera(size);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene sc = nvs::generate_scene(100 + seed);
    const auto s = nvs::make_pair(sc, seed, Split::kSmall, cam);
    const auto tgt = nvs::rasterize(sc, cam, s.pose);
    const auto maps = nvs::unproject(cam, s.depth);
    const auto flow = nvs::reproject(cam, maps, s.pose);
    const auto depth_t = nvs::Tensor<double>::from_data({size, size}, s.depth);
    const auto gt = nvs::image_to_tensor<double>(s.gt);
    const auto back = nvs::inverse_warp(gt, depth_t, cam, s.pose);
    double err = 0;
    int n = 0;
    for (int p = 0; p < size * size; ++p) {
      if (!flow.valid[static_cast<std::size_t>(p)]) continue;
      const double x = flow.target_x[static_cast<std::size_t>(p)];
      const double y = flow.target_y[static_cast<std::size_t>(p)];
      if (x < 1 || y < 1 || x > size - 2 || y > size - 2) continue;
      const int xi = static_cast<int>(std::lround(x)), yi = static_cast<int>(std::lround(y));
      const double zt = tgt.depth[static_cast<std::size_t>(yi * size + xi)];
      if (std::abs(zt - flow.target_depth[static_cast<std::size_t>(p)]) > 0.05 * zt) continue;
      for (int c = 0; c < 3; ++c) {
        const double a = 0.5 * (back.value(c * size * size + p) + 1.0);
        err += std::abs(a - s.ref.data[static_cast<std::size_t>(c * size * size + p)]);
      }
      n += 3;
    }
    ASSERT_GT(n, 300);
    EXPECT_LT(err / n, 0.05) << "seed " << seed;
  }
}

TEST(MakePair, RatiosLandInRequestedBins) {
  const auto cam = nvs::default_camera(64);
  for (Split bin : {Split::kSmall, Split::kMedium, Split::kLarge}) {
    for (std::uint64_t i = 0; i < 10; ++i) {
      const Scene sc = nvs::generate_scene(nvs::derive_seed(3, i));
      const auto s = nvs::make_pair(sc, i, bin, cam);
      EXPECT_EQ(nvs::categorize_split(s.ratio), bin);
      EXPECT_EQ(s.bin, bin);
      EXPECT_NEAR(nvs::out_of_view_mask(cam, s.depth, s.pose).ratio(), s.ratio, 1e-12);
      const double deg = std::acos(std::clamp((s.pose.R.trace() - 1) / 2, -1.0, 1.0)) * 180 / M_PI;
      EXPECT_GE(deg, 10 - 1e-9);
      EXPECT_LE(deg, 60 + 1e-9);
      EXPECT_LE(s.pose.t.norm(), 3 + 1e-9);
    }
  }
  EXPECT_THROW(nvs::make_pair(nvs::generate_scene(1), 1, Split::kOutOfRange, cam),
               nvs::ValidationError);
}

TEST(MakePair, IdentityMotionDebugSample) {
  const auto cam = nvs::default_camera(32);
  const auto s = nvs::make_pair(nvs::generate_scene(5), 5, Split::kSmall, cam, true);
  EXPECT_EQ(s.ratio, 0.0);
  EXPECT_EQ(s.ref.data, s.gt.data);
  EXPECT_TRUE(s.pose.is_identity());
}

TEST(Neighbors, SmallMotionsInsideRoom) {
  const auto cam = nvs::default_camera(32);
  const auto n = nvs::make_neighbors(nvs::generate_scene(9), 4, cam, 3);
  ASSERT_EQ(n.frames.size(), 3u);
  for (const auto& p : n.poses) {
    const Eigen::Vector3d c = -p.R.transpose() * p.t;
    EXPECT_GE(c.norm(), 0.1 - 1e-12);
    EXPECT_LE(c.norm(), 0.3 + 1e-12);
  }
}

TEST(Manifest, LineRoundTripsExactly) {
  nvs::ManifestEntry e;
  e.seed = 18446744073709551615ull;
  e.bin = Split::kMedium;
  e.pose.R = nvs::rodrigues(Eigen::Vector3d(0.3, -0.4, 0.5).normalized(), 0.7);
  e.pose.t = Eigen::Vector3d(0.1, -1.0 / 3, 2.5);
  e.ratio = 0.4567891234;
  const auto back = nvs::parse_manifest_line(nvs::manifest_line(e));
  EXPECT_EQ(back.seed, e.seed);
  EXPECT_EQ(back.bin, e.bin);
  EXPECT_EQ(back.pose.R, e.pose.R);
  EXPECT_EQ(back.pose.t, e.pose.t);
  EXPECT_EQ(back.ratio, e.ratio);
  EXPECT_THROW(nvs::parse_manifest_line("seed=1 bin=huge R=1,0,0,0,1,0,0,0,1 t=0,0,0 ratio=0"),
               nvs::ValidationError);
  EXPECT_THROW(nvs::parse_manifest_line("seed=1 bin=small R=1,0,0 t=0,0,0 ratio=0"),
               nvs::ValidationError);
  EXPECT_THROW(nvs::parse_manifest_line("seed=1 bin=small"), nvs::ValidationError);
}

TEST(Dataset, DeterministicAndReproducibleFromManifest) {
  const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
  const std::vector<Split> bins{Split::kSmall, Split::kMedium, Split::kLarge};
  const auto ds = nvs::build_dataset(a, 6, bins, 7, 32);
  nvs::build_dataset(b, 6, bins, 7, 32);
  EXPECT_EQ(file_bytes(a + "/manifest.txt"), file_bytes(b + "/manifest.txt"));
  const auto loaded = nvs::load_manifest(a);
  ASSERT_EQ(loaded.entries.size(), 6u);
  EXPECT_EQ(loaded.image_size, 32);
  const auto cam = nvs::default_camera(32);
  for (std::size_t i = 0; i < loaded.entries.size(); ++i) {
    const auto& e = loaded.entries[i];
    EXPECT_EQ(e.bin, bins[i % 3]);
    const Scene sc = nvs::generate_scene(e.seed);
    const auto tmp = temp_dir("rerender.ppm");
    nvs::write_ppm(tmp, nvs::rasterize(sc, cam, e.pose).image);
    EXPECT_EQ(file_bytes(tmp), file_bytes(nvs::sample_path(a, i, "gt.ppm")));
    nvs::write_ppm(tmp, nvs::rasterize(sc, cam, RelativePose::identity()).image);
    EXPECT_EQ(file_bytes(tmp), file_bytes(nvs::sample_path(a, i, "ref.ppm")));
    int w = 0, h = 0;
    const auto depth = nvs::read_pfm(nvs::sample_path(a, i, "depth.pfm"), w, h);
    EXPECT_NEAR(nvs::out_of_view_mask(cam, depth, e.pose).ratio(), e.ratio, 0.02);
  }
  EXPECT_THROW(nvs::build_dataset(a, 0, bins, 7, 32), nvs::ValidationError);
  EXPECT_THROW(nvs::load_manifest(temp_dir("missing")), nvs::IoError);
}

TEST(ImageIo, RoundTrips) {
  const auto dir = temp_dir("io");
  fs::create_directories(dir);
  nvs::Image img(5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 17) / 16.0f;
  nvs::write_ppm(dir + "/a.ppm", img);
  const auto back = nvs::read_ppm(dir + "/a.ppm");
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.data, nvs::quantized(img).data);

  std::vector<double> d(15);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.5 + static_cast<double>(i) * 0.25;
  nvs::write_pfm(dir + "/d.pfm", 5, 3, d);
  int w = 0, h = 0;
  EXPECT_EQ(nvs::read_pfm(dir + "/d.pfm", w, h), d);
  const std::string pfm = file_bytes(dir + "/d.pfm");
  EXPECT_EQ(pfm.substr(0, 12), "Pf\n5 3\n-1.0\n");

  std::vector<std::uint8_t> m{0, 255, 7, 9, 1, 2};
  nvs::write_pgm(dir + "/m.pgm", 3, 2, m);
  EXPECT_EQ(nvs::read_pgm(dir + "/m.pgm", w, h), m);
  EXPECT_EQ(w, 3);
  EXPECT_EQ(h, 2);
}

TEST(ImageIo, RejectsBadFiles) {
  const auto dir = temp_dir("io_bad");
  fs::create_directories(dir);
  nvs::write_ppm(dir + "/a.ppm", nvs::Image(4, 4));
  std::string s = file_bytes(dir + "/a.ppm");
  std::ofstream(dir + "/t.ppm", std::ios::binary) << s.substr(0, s.size() - 5);
  EXPECT_THROW(nvs::read_ppm(dir + "/t.ppm"), nvs::IoError);
  std::ofstream(dir + "/m.ppm", std::ios::binary) << "P3\n4 4\n255\n";
  EXPECT_THROW(nvs::read_ppm(dir + "/m.ppm"), nvs::IoError);
  EXPECT_THROW(nvs::read_ppm(dir + "/none.ppm"), nvs::IoError);
}

}  // namespace
