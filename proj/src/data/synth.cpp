#include "nvs/synth.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "nvs/errors.hpp"
#include "nvs/rng.hpp"
#include "nvs/warp.hpp"

namespace nvs {
namespace {

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(ix)),
                                      static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double sx = smooth(x - fx), sy = smooth(y - fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
}

Eigen::Vector3d random_direction(Rng& rng) {
  for (;;) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

std::array<float, 3> random_color(Rng& rng) {
  return {static_cast<float>(rng.uniform(0.1, 0.9)), static_cast<float>(rng.uniform(0.1, 0.9)),
          static_cast<float>(rng.uniform(0.1, 0.9))};
}

Texture random_texture(Rng& rng) {
  Texture t;
  t.kind = static_cast<TextureKind>(rng.uniform_int(0, 2));
  t.a = random_color(rng);
  t.b = random_color(rng);
  t.cell = rng.uniform(0.8, 2.0);
  t.angle = rng.uniform(0.0, std::numbers::pi);
  t.octaves = static_cast<int>(rng.uniform_int(1, 2));
  t.seed = rng.next_u64();
  return t;
}

Quad make_quad(const Eigen::Vector3d& origin, const Eigen::Vector3d& eu, const Eigen::Vector3d& ev,
               Rng& rng) {
  Quad q;
  q.origin = origin;
  q.edge_u = eu;
  q.edge_v = ev;
  q.texture = random_texture(rng);
  return q;
}

bool inside_room(const Scene& s, const Eigen::Vector3d& c) {
  const double m = 0.3;
  return std::abs(c.x()) < s.half_width - m && c.y() > s.ceiling + m && c.y() < s.floor - m &&
         c.z() < s.back - 0.5 && c.z() > -1.0;
}

// Pose whose camera centre sits at `centre` (world) with rotation R.
RelativePose pose_at(const Eigen::Matrix3d& R, const Eigen::Vector3d& centre) {
  RelativePose p;
  p.R = R;
  p.t = -R * centre;
  return p;
}

}  // namespace

std::array<float, 3> Texture::sample(double s, double t) const {
  double w = 0;
  switch (kind) {
    case TextureKind::kChecker:
      w = (static_cast<std::int64_t>(std::floor(s / cell)) +
           static_cast<std::int64_t>(std::floor(t / cell))) & 1;
      break;
    case TextureKind::kGradient: {
      const double p = s * std::cos(angle) + t * std::sin(angle);
      w = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * p / (4 * cell));
      break;
    }
    case TextureKind::kNoise: {
      double amp = 1, norm = 0;
      for (int o = 0; o < octaves; ++o) {
        const double f = std::ldexp(1.0, o) / cell;
        w += amp * value_noise(seed + static_cast<std::uint64_t>(o), s * f, t * f);
        norm += amp;
        amp *= 0.5;
      }
      w /= norm;
      break;
    }
  }
  std::array<float, 3> c;
  for (int k = 0; k < 3; ++k) c[k] = static_cast<float>(a[k] * (1 - w) + b[k] * w);
  return c;
}

Scene generate_scene(std::uint64_t seed) {
  Rng rng(seed);
  Scene s;
  s.seed = seed;
  s.half_width = rng.uniform(2.0, 3.5);
  s.floor = kCameraHeight;
  s.ceiling = -rng.uniform(1.0, 1.8);
  s.back = rng.uniform(6.0, 10.0);
  s.background = random_color(rng);
  const double w = s.half_width, near = 1.0, depth = s.back - near, height = s.floor - s.ceiling;
  s.quads.push_back(make_quad({-w, s.floor, near}, {2 * w, 0, 0}, {0, 0, depth}, rng));
  s.quads.push_back(make_quad({-w, s.ceiling, near}, {2 * w, 0, 0}, {0, 0, depth}, rng));
  s.quads.push_back(make_quad({-w, s.ceiling, s.back}, {2 * w, 0, 0}, {0, height, 0}, rng));
  s.quads.push_back(make_quad({-w, s.ceiling, near}, {0, 0, depth}, {0, height, 0}, rng));
  s.quads.push_back(make_quad({w, s.ceiling, near}, {0, 0, depth}, {0, height, 0}, rng));
  const auto panels = rng.uniform_int(0, 10);
  for (std::int64_t i = 0; i < panels; ++i) {
    const double pw = rng.uniform(0.4, 1.5), ph = rng.uniform(0.4, 1.5);
    const double yaw = rng.uniform(-1.0, 1.0);
    const Eigen::Vector3d centre(rng.uniform(-w + 0.5, w - 0.5),
                                 rng.uniform(s.ceiling + 0.5, s.floor - 0.5),
                                 rng.uniform(2.0, s.back - 0.5));
    const Eigen::Vector3d eu = Eigen::Vector3d(std::cos(yaw), 0, std::sin(yaw)) * pw;
    const Eigen::Vector3d ev(0, ph, 0);
    s.quads.push_back(make_quad(centre - 0.5 * eu - 0.5 * ev, eu, ev, rng));
  }
  return s;
}

bool scene_valid(const Scene& scene, const CameraModel& camera) {
  if (scene.quads.empty()) return false;
  for (const auto& q : scene.quads) {
    for (double a : {0.0, 1.0}) {
      for (double b : {0.0, 1.0}) {
        if ((q.origin + a * q.edge_u + b * q.edge_v).z() <= 0) return false;
      }
    }
  }
  const auto r = rasterize(scene, camera, RelativePose::identity());
  for (double d : r.depth) {
    if (d < kBackgroundDepth) return true;
  }
  return false;
}

RenderOutput rasterize(const Scene& scene, const CameraModel& camera, const RelativePose& pose) {
  camera.validate();
  pose.validate();
  struct Prepared {
    Eigen::Vector3d n, o, eu, ev;
    double inv_uu, inv_vv, len_u, len_v;
  };
  std::vector<Prepared> qs;
  for (const auto& q : scene.quads) {
    Prepared p;
    p.o = q.origin;
    p.eu = q.edge_u;
    p.ev = q.edge_v;
    p.n = q.edge_u.cross(q.edge_v);
    p.inv_uu = 1.0 / q.edge_u.squaredNorm();
    p.inv_vv = 1.0 / q.edge_v.squaredNorm();
    p.len_u = q.edge_u.norm();
    p.len_v = q.edge_v.norm();
    qs.push_back(p);
  }
  const Eigen::Matrix3d Rt = pose.R.transpose();
  const Eigen::Vector3d centre = -Rt * pose.t;
  // Nearest hit along the ray through (x, y); returns quad index or -1.
  auto cast = [&](double x, double y, double& depth, double& a, double& b) {
    const Eigen::Vector3d dir =
        Rt * Eigen::Vector3d((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
    int best = -1;
    depth = kBackgroundDepth;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const Prepared& q = qs[i];
      const double den = q.n.dot(dir);
      if (std::abs(den) < 1e-12) continue;
      const double s = q.n.dot(q.o - centre) / den;
      if (s <= 1e-6 || (best >= 0 && s >= depth)) continue;
      const Eigen::Vector3d rel = centre + s * dir - q.o;
      const double qa = rel.dot(q.eu) * q.inv_uu, qb = rel.dot(q.ev) * q.inv_vv;
      if (qa < 0 || qa > 1 || qb < 0 || qb > 1) continue;
      best = static_cast<int>(i);
      depth = s;
      a = qa;
      b = qb;
    }
    return best;
  };
  RenderOutput out;
  out.image = Image(camera.width, camera.height);
  out.depth.assign(static_cast<std::size_t>(camera.width * camera.height), kBackgroundDepth);
  static constexpr double kSub[4][2] = {{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}};
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      double d, a, b;
      if (cast(u, v, d, a, b) >= 0) out.depth[static_cast<std::size_t>(v * camera.width + u)] = d;
      float acc[3] = {0, 0, 0};
      for (const auto& o : kSub) {
        const int hit = cast(u + o[0], v + o[1], d, a, b);
        std::array<float, 3> c = scene.background;
        if (hit >= 0) {
          const auto& q = qs[static_cast<std::size_t>(hit)];
          c = scene.quads[static_cast<std::size_t>(hit)].texture.sample(a * q.len_u, b * q.len_v);
        }
        for (int k = 0; k < 3; ++k) acc[k] += c[static_cast<std::size_t>(k)];
      }
      for (int k = 0; k < 3; ++k) out.image.at(k, v, u) = acc[k] * 0.25f;
    }
  }
  return out;
}

SceneSample make_pair(const Scene& scene, std::uint64_t seed, Split bin, const CameraModel& camera,
                      bool identity_motion) {
  SceneSample s;
  s.seed = scene.seed;
  RenderOutput ref = rasterize(scene, camera, RelativePose::identity());
  s.ref = std::move(ref.image);
  s.depth = std::move(ref.depth);
  if (identity_motion) {
    s.pose = RelativePose::identity();
    s.ratio = out_of_view_mask(camera, s.depth, s.pose).ratio();
    s.gt = s.ref;
    s.bin = categorize_split(s.ratio);
    return s;
  }
  if (bin == Split::kOutOfRange) throw ValidationError("make_pair needs small, medium or large");
  Rng rng(seed);
  const double deg = std::numbers::pi / 180.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double angle = rng.uniform(10 * deg, 60 * deg);
    const Eigen::Matrix3d R = rodrigues(random_direction(rng), angle);
    const Eigen::Vector3d c = random_direction(rng) * rng.uniform(0.0, 3.0);
    if (!inside_room(scene, c)) continue;
    const RelativePose pose = pose_at(R, c);
    const double ratio = out_of_view_mask(camera, s.depth, pose).ratio();
    if (categorize_split(ratio) != bin) continue;
    s.pose = pose;
    s.ratio = ratio;
    s.bin = bin;
    s.gt = rasterize(scene, camera, pose).image;
    return s;
  }
  throw DomainError("no camera motion for bin " + split_name(bin) + " in scene " +
                    std::to_string(scene.seed) + " after 1000 attempts");
}

NeighborFrames make_neighbors(const Scene& scene, std::uint64_t seed, const CameraModel& camera,
                              int count) {
  NeighborFrames n;
  RenderOutput ref = rasterize(scene, camera, RelativePose::identity());
  n.ref = std::move(ref.image);
  n.depth = std::move(ref.depth);
  Rng rng(seed);
  const double deg = std::numbers::pi / 180.0;
  while (static_cast<int>(n.frames.size()) < count) {
    const Eigen::Matrix3d R = rodrigues(random_direction(rng), rng.uniform(0.0, 3 * deg));
    const Eigen::Vector3d c = random_direction(rng) * rng.uniform(0.1, 0.3);
    if (!inside_room(scene, c)) continue;
    const RelativePose pose = pose_at(R, c);
    n.frames.push_back(rasterize(scene, camera, pose).image);
    n.poses.push_back(pose);
  }
  return n;
}

std::string manifest_line(const ManifestEntry& e) {
  std::ostringstream os;
  char buf[64];
  os << "seed=" << e.seed << " bin=" << split_name(e.bin) << " R=";
  for (int i = 0; i < 9; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", e.pose.R(i / 3, i % 3));
    os << (i ? "," : "") << buf;
  }
  os << " t=";
  for (int i = 0; i < 3; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", e.pose.t[i]);
    os << (i ? "," : "") << buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", e.ratio);
  os << " ratio=" << buf;
  return os.str();
}

namespace {

std::vector<double> parse_numbers(const std::string& s, std::size_t expect, const std::string& key) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("manifest: bad number '" + item + "' in " + key);
    }
  }
  if (v.size() != expect) {
    throw ValidationError("manifest: " + key + " needs " + std::to_string(expect) + " values");
  }
  return v;
}

}  // namespace

ManifestEntry parse_manifest_line(const std::string& line) {
  ManifestEntry e;
  std::istringstream is(line);
  std::string tok;
  bool have[5] = {false, false, false, false, false};
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ValidationError("manifest: malformed field '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "seed") {
      try {
        std::size_t used = 0;
        e.seed = std::stoull(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
      } catch (const std::exception&) {
        throw ValidationError("manifest: bad seed '" + val + "'");
      }
      have[0] = true;
    } else if (key == "bin") {
      e.bin = parse_split(val);
      have[1] = true;
    } else if (key == "R") {
      const auto r = parse_numbers(val, 9, "R");
      for (int i = 0; i < 9; ++i) e.pose.R(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
      have[2] = true;
    } else if (key == "t") {
      const auto t = parse_numbers(val, 3, "t");
      e.pose.t = Eigen::Vector3d(t[0], t[1], t[2]);
      have[3] = true;
    } else if (key == "ratio") {
      e.ratio = parse_numbers(val, 1, "ratio")[0];
      have[4] = true;
    } else {
      throw ValidationError("manifest: unknown field '" + key + "'");
    }
  }
  for (bool h : have) {
    if (!h) throw ValidationError("manifest: line lacks seed, bin, R, t or ratio: " + line);
  }
  return e;
}

std::string sample_path(const std::string& dir, std::size_t index, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04zu_", index);
  return (std::filesystem::path(dir) / (buf + suffix)).string();
}

Dataset build_dataset(const std::string& dir, int count, const std::vector<Split>& bins,
                      std::uint64_t seed, int image_size) {
  if (count < 1) throw ValidationError("dataset count must be >= 1");
  if (bins.empty()) throw ValidationError("dataset needs at least one bin");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const CameraModel camera = default_camera(image_size);
  Dataset ds;
  ds.image_size = image_size;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const Split bin = bins[static_cast<std::size_t>(i) % bins.size()];
    const Scene scene = generate_scene(scene_seed);
    const SceneSample s = make_pair(scene, derive_seed(scene_seed, 1), bin, camera);
    const auto idx = static_cast<std::size_t>(i);
    write_ppm(sample_path(dir, idx, "ref.ppm"), s.ref);
    write_ppm(sample_path(dir, idx, "gt.ppm"), s.gt);
    write_pfm(sample_path(dir, idx, "depth.pfm"), image_size, image_size, s.depth);
    ds.entries.push_back({scene_seed, bin, s.pose, s.ratio});
  }
  const auto path = std::filesystem::path(dir) / "manifest.txt";
  const auto tmp = std::filesystem::path(dir) / "manifest.txt.tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << "# size=" << image_size << "\n";
    for (const auto& e : ds.entries) f << manifest_line(e) << "\n";
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename manifest into " + path.string() + ": " + ec.message());
  return ds;
}

Dataset load_manifest(const std::string& dir) {
  const auto path = (std::filesystem::path(dir) / "manifest.txt").string();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto p = line.find("size=");
      if (p != std::string::npos) ds.image_size = std::stoi(line.substr(p + 5));
      continue;
    }
    try {
      ds.entries.push_back(parse_manifest_line(line));
    } catch (const ValidationError& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (ds.entries.empty()) throw IoError(path + ": no samples");
  return ds;
}

}  // namespace nvs
