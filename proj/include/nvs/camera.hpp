#pragma once

// Pinhole camera math in double precision: unprojection, reprojection into a
// second view, axis-angle pose parameters and intrinsics scaling.
//
// Pixel (u, v) is the integer column/row index; K maps camera coordinates to
// those indices directly.

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace nvs {

struct CameraModel {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  Eigen::Matrix3d K() const;
  /// Throws DomainError unless focal lengths are positive and extents >= 1.
  void validate() const;
};

/// Square camera with f = c = size / 2 (a 90 degree field of view).
CameraModel default_camera(int size);

/// Multiplies fx, fy, cx, cy and the extents by `factor`; scaled extents must be integral.
CameraModel scale_intrinsics(const CameraModel& camera, double factor);

/// Maps reference-camera coordinates into the target camera: X' = R X + t.
struct RelativePose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RelativePose identity() { return {}; }
  bool is_identity() const;
  RelativePose inverse() const;
  /// Throws ValidationError unless R is orthonormal with det 1 (within 1e-6).
  void validate() const;
  /// R row-major followed by t.
  std::array<double, 12> flat() const;
  static RelativePose from_flat(const std::array<double, 12>& v);
};

struct PoseParams7 {
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();  // unit, or zero at identity
  double theta = 0;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  /// (axis, theta, t) as seven values.
  std::array<double, 7> vec() const;
};

/// Axis-angle from R - R^T with theta = atan2(|u|, tr(R) - 1); t is left zero.
PoseParams7 rotation_to_axis_angle(const Eigen::Matrix3d& R);
PoseParams7 pose_params(const RelativePose& pose);
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double theta);

/// Per-pixel normalized image coordinates and 3D points, row-major [H*W][3].
struct CoordinateMaps {
  int width = 0, height = 0;
  std::vector<double> depth;  // H*W
  std::vector<double> x_img;  // H*W*3, z component 1
  std::vector<double> x_w;    // H*W*3, depth * x_img
};

/// Throws DomainError for non-positive depth or a size mismatch.
CoordinateMaps unproject(const CameraModel& camera, const std::vector<double>& depth);

/// Samples depth(factor*v, factor*u) for an integer downsampling factor.
std::vector<double> downsample_depth(const std::vector<double>& depth, int width, int height,
                                     int factor);

/// Where every source pixel lands in the target view.
struct FlowField {
  int width = 0, height = 0;
  std::vector<double> target_x, target_y;  // p'
  std::vector<double> flow_x, flow_y;      // p' - p
  std::vector<double> target_depth;        // z in the target camera
  std::vector<std::uint8_t> valid;         // 0 when z <= 1e-6 (behind the camera)
};

/// p' = perspective_divide(K (R X_w + t)). The identity pose gives exactly zero flow.
FlowField reproject(const CameraModel& camera, const CoordinateMaps& maps,
                    const RelativePose& pose);

/// Projects a camera-space point to pixel coordinates; false when z <= 1e-6.
bool project_point(const CameraModel& camera, const Eigen::Vector3d& x, double& u, double& v);

}  // namespace nvs
