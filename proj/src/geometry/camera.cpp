#include "nvs/camera.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "nvs/errors.hpp"

namespace nvs {
namespace {

constexpr double kMinDepth = 1e-6;

}  // namespace

Eigen::Matrix3d CameraModel::K() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

void CameraModel::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DomainError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw DomainError("camera extents must be >= 1");
}

CameraModel default_camera(int size) {
  const double half = size / 2.0;
  CameraModel c{half, half, half, half, size, size};
  c.validate();
  return c;
}

CameraModel scale_intrinsics(const CameraModel& camera, double factor) {
  if (!(factor > 0)) throw DomainError("intrinsics scale factor must be positive");
  const double w = camera.width * factor;
  const double h = camera.height * factor;
  if (std::abs(w - std::round(w)) > 1e-9 || std::abs(h - std::round(h)) > 1e-9) {
    throw DomainError("scaled extents " + std::to_string(w) + "x" + std::to_string(h) +
                      " are not integral");
  }
  CameraModel out{camera.fx * factor, camera.fy * factor, camera.cx * factor,
                  camera.cy * factor,  static_cast<int>(std::lround(w)),
                  static_cast<int>(std::lround(h))};
  out.validate();
  return out;
}

bool RelativePose::is_identity() const {
  return R == Eigen::Matrix3d::Identity() && t == Eigen::Vector3d::Zero();
}

RelativePose RelativePose::inverse() const {
  RelativePose inv;
  inv.R = R.transpose();
  inv.t = -(inv.R * t);
  return inv;
}

void RelativePose::validate() const {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = R.determinant();
  if (!std::isfinite(ortho) || ortho > 1e-6 || std::abs(det - 1.0) > 1e-6) {
    throw ValidationError("rotation is not orthonormal (|R^T R - I| = " + std::to_string(ortho) +
                          ", det = " + std::to_string(det) + ")");
  }
  if (!t.allFinite()) throw ValidationError("translation is not finite");
}

std::array<double, 12> RelativePose::flat() const {
  std::array<double, 12> v{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(3 * i + j)] = R(i, j);
  }
  for (int i = 0; i < 3; ++i) v[static_cast<std::size_t>(9 + i)] = t(i);
  return v;
}

RelativePose RelativePose::from_flat(const std::array<double, 12>& v) {
  RelativePose p;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) p.R(i, j) = v[static_cast<std::size_t>(3 * i + j)];
  }
  for (int i = 0; i < 3; ++i) p.t(i) = v[static_cast<std::size_t>(9 + i)];
  return p;
}

std::array<double, 7> PoseParams7::vec() const {
  return {axis(0), axis(1), axis(2), theta, t(0), t(1), t(2)};
}

PoseParams7 rotation_to_axis_angle(const Eigen::Matrix3d& R) {
  RelativePose probe;
  probe.R = R;
  probe.validate();
  const Eigen::Vector3d u(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double norm_u = u.norm();
  const double c = R.trace() - 1.0;
  PoseParams7 out;
  if (norm_u >= 1e-8) {
    out.axis = u / norm_u;
    out.theta = std::atan2(norm_u, c);
    return out;
  }
  if (c > 0) return out;  // identity
  // theta near pi: R ~ 2 a a^T - I, so a_i^2 = (R_ii + 1) / 2.
  const Eigen::Matrix3d B = (R + Eigen::Matrix3d::Identity()) * 0.5;
  int k = 0;
  B.diagonal().maxCoeff(&k);
  Eigen::Vector3d a = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
  a.normalize();
  out.axis = a;
  out.theta = M_PI;
  return out;
}

PoseParams7 pose_params(const RelativePose& pose) {
  PoseParams7 p = rotation_to_axis_angle(pose.R);
  p.t = pose.t;
  return p;
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double theta) {
  if (axis.norm() == 0.0) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d a = axis.normalized();
  Eigen::Matrix3d k;
  k << 0, -a(2), a(1), a(2), 0, -a(0), -a(1), a(0), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1 - std::cos(theta)) * k * k;
}

CoordinateMaps unproject(const CameraModel& camera, const std::vector<double>& depth) {
  camera.validate();
  const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
  if (depth.size() != n) {
    throw DomainError("depth map has " + std::to_string(depth.size()) + " values, camera needs " +
                      std::to_string(n));
  }
  CoordinateMaps maps;
  maps.width = camera.width;
  maps.height = camera.height;
  maps.depth = depth;
  maps.x_img.resize(3 * n);
  maps.x_w.resize(3 * n);
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * camera.width + u;
      const double d = depth[i];
      if (!(d > 0) || !std::isfinite(d)) {
        throw DomainError("non-positive depth " + std::to_string(d) + " at pixel (" +
                          std::to_string(u) + "," + std::to_string(v) + ")");
      }
      const double xi[3] = {(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0};
      for (int k = 0; k < 3; ++k) {
        maps.x_img[3 * i + k] = xi[k];
        maps.x_w[3 * i + k] = d * xi[k];
      }
    }
  }
  return maps;
}

std::vector<double> downsample_depth(const std::vector<double>& depth, int width, int height,
                                     int factor) {
  if (factor < 1 || width % factor || height % factor) {
    throw DomainError("depth extents " + std::to_string(width) + "x" + std::to_string(height) +
                      " not divisible by " + std::to_string(factor));
  }
  if (depth.size() != static_cast<std::size_t>(width) * height) {
    throw DomainError("depth map size does not match its extents");
  }
  const int w = width / factor, h = height / factor;
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      out[static_cast<std::size_t>(v) * w + u] =
          depth[static_cast<std::size_t>(v * factor) * width + u * factor];
    }
  }
  return out;
}

bool project_point(const CameraModel& camera, const Eigen::Vector3d& x, double& u, double& v) {
  if (x(2) <= kMinDepth) return false;
  u = camera.fx * x(0) / x(2) + camera.cx;
  v = camera.fy * x(1) / x(2) + camera.cy;
  return true;
}

FlowField reproject(const CameraModel& camera, const CoordinateMaps& maps,
                    const RelativePose& pose) {
  if (maps.width != camera.width || maps.height != camera.height) {
    throw DomainError("coordinate maps do not match the camera extents");
  }
  const std::size_t n = static_cast<std::size_t>(maps.width) * maps.height;
  FlowField f;
  f.width = maps.width;
  f.height = maps.height;
  f.target_x.resize(n);
  f.target_y.resize(n);
  f.flow_x.assign(n, 0.0);
  f.flow_y.assign(n, 0.0);
  f.target_depth.resize(n);
  f.valid.assign(n, 1);
  const bool identity = pose.is_identity();
  for (std::size_t i = 0; i < n; ++i) {
    const double px = static_cast<double>(i % static_cast<std::size_t>(maps.width));
    const double py = static_cast<double>(i / static_cast<std::size_t>(maps.width));
    if (identity) {
      f.target_x[i] = px;
      f.target_y[i] = py;
      f.target_depth[i] = maps.depth[i];
      continue;
    }
    const Eigen::Vector3d xw(maps.x_w[3 * i], maps.x_w[3 * i + 1], maps.x_w[3 * i + 2]);
    const Eigen::Vector3d xc = pose.R * xw + pose.t;
    f.target_depth[i] = xc(2);
    double u = 0, v = 0;
    if (!project_point(camera, xc, u, v)) {
      f.valid[i] = 0;
      f.target_x[i] = px;
      f.target_y[i] = py;
      continue;
    }
    f.target_x[i] = u;
    f.target_y[i] = v;
    f.flow_x[i] = u - px;
    f.flow_y[i] = v - py;
  }
  return f;
}

}  // namespace nvs
