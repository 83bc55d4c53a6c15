#pragma once

// Procedural textured-quad rooms, a z-buffered ray-cast rasterizer and the
// out-of-view binned pair sampler.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nvs/camera.hpp"
#include "nvs/image_io.hpp"
#include "nvs/splits.hpp"

namespace nvs {

inline constexpr double kBackgroundDepth = 12.0;

enum class TextureKind { kChecker, kGradient, kNoise };

struct Texture {
  TextureKind kind = TextureKind::kChecker;
  std::array<float, 3> a{0.2f, 0.2f, 0.2f}, b{0.8f, 0.8f, 0.8f};
  double cell = 0.5;    // checker cell / noise wavelength, metres
  double angle = 0.0;   // gradient direction
  int octaves = 1;
  std::uint64_t seed = 0;

  std::array<float, 3> sample(double s, double t) const;  // s, t in metres along the quad
};

/// Rectangle origin + a*edge_u + b*edge_v, a, b in [0,1]; edges orthogonal.
struct Quad {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d edge_v = Eigen::Vector3d::UnitY();
  Texture texture;
};

/// The reference camera always sits this far above the floor, which fixes the
/// metric scale a single view can reveal.
inline constexpr double kCameraHeight = 1.5;

/// World frame = reference camera frame (x right, y down, z forward).
struct Scene {
  std::vector<Quad> quads;
  std::array<float, 3> background{0.0f, 0.0f, 0.0f};
  // Room box: |x| < half_width, ceiling < y < floor, z < back.
  double half_width = 3, floor = 1.5, ceiling = -1.5, back = 8;
  std::uint64_t seed = 0;
};

/// Deterministic room: floor, ceiling, back and side walls plus 0-10 panels.
Scene generate_scene(std::uint64_t seed);
/// All corners in front of the reference camera and at least one quad visible.
bool scene_valid(const Scene& scene, const CameraModel& camera);

struct RenderOutput {
  Image image;
  std::vector<double> depth;  // camera z per pixel centre; background = kBackgroundDepth
};

/// `pose` maps world (reference) coordinates into the rendering camera.
/// Colour is the mean of a 2x2 subpixel grid; depth is taken at pixel centres.
RenderOutput rasterize(const Scene& scene, const CameraModel& camera, const RelativePose& pose);

struct SceneSample {
  Image ref, gt;
  std::vector<double> depth;  // reference view
  RelativePose pose;          // reference -> target
  double ratio = 0;
  std::uint64_t seed = 0;     // scene seed
  Split bin = Split::kOutOfRange;
};

/// Rejection-samples a motion (rotation 10-60 deg, translation up to 3 m, target
/// camera kept inside the room) until the out-of-view ratio lands in `bin`.
/// Throws DomainError after 1000 attempts.
SceneSample make_pair(const Scene& scene, std::uint64_t seed, Split bin, const CameraModel& camera,
                      bool identity_motion = false);

/// Small-motion neighbour frames of the reference view, used to train depth.
struct NeighborFrames {
  Image ref;
  std::vector<double> depth;
  std::vector<Image> frames;
  std::vector<RelativePose> poses;  // reference -> neighbour
};
NeighborFrames make_neighbors(const Scene& scene, std::uint64_t seed, const CameraModel& camera,
                              int count = 2);

struct ManifestEntry {
  std::uint64_t seed = 0;
  Split bin = Split::kOutOfRange;
  RelativePose pose;
  double ratio = 0;
};

struct Dataset {
  int image_size = 64;
  std::vector<ManifestEntry> entries;
};

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);

/// Sample i uses bin bins[i % bins.size()] and scene seed derive_seed(seed, i).
/// Writes manifest.txt and sample_NNNN_{ref,gt}.ppm / _depth.pfm into `dir`.
Dataset build_dataset(const std::string& dir, int count, const std::vector<Split>& bins,
                      std::uint64_t seed, int image_size = 64);
Dataset load_manifest(const std::string& dir);
std::string sample_path(const std::string& dir, std::size_t index, const std::string& suffix);

}  // namespace nvs
