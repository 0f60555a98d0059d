#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "viewx/error.hpp"

namespace viewx {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Pinhole camera. Pixel (u, v) maps to the ray ((u - cx) / fx, (v - cy) / fy, 1)
/// with integer pixel coordinates (no half-pixel shift).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  bool valid() const noexcept {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height;
  }

  void validate() const {
    if (!valid()) throw Error(Errc::domain, "invalid camera intrinsics");
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Camera-to-world rigid transform; the camera looks along +z, x right, y down.
/// The translation is the camera center in world coordinates.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  const Vec3& center() const noexcept { return translation; }
  Vec3 optical_axis() const { return rotation.col(2); }

  Vec3 world_to_camera(const Vec3& world) const {
    return rotation.transpose() * (world - translation);
  }
  Vec3 camera_to_world(const Vec3& cam) const { return rotation * cam + translation; }

  bool is_rotation(double tol = 1e-6) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::fabs(rotation.determinant() - 1.0) <= tol;
  }

  void validate(double tol = 1e-6) const {
    if (!rotation.allFinite() || !translation.allFinite())
      throw Error(Errc::domain, "camera pose has non-finite entries");
    if (!is_rotation(tol)) throw Error(Errc::domain, "camera rotation is not orthonormal");
  }

  static CameraPose from_center(const Vec3& center) {
    CameraPose p;
    p.translation = center;
    return p;
  }

  bool operator==(const CameraPose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

struct Trajectory {
  std::vector<CameraPose> poses;

  std::size_t frame_count() const noexcept { return poses.size(); }
};

/// Shortest-arc spherical interpolation of unit quaternions; falls back to a
/// normalized lerp when the endpoints are nearly parallel.
inline Quat slerp(const Quat& qa, const Quat& qb_in, double alpha) {
  Quat qb = qb_in;
  double dot = qa.coeffs().dot(qb.coeffs());
  if (dot < 0.0) {
    qb.coeffs() = -qb.coeffs();
    dot = -dot;
  }
  Eigen::Vector4d mixed;
  if (dot > 1.0 - 1e-6) {
    mixed = (1.0 - alpha) * qa.coeffs() + alpha * qb.coeffs();
  } else {
    const double theta = std::acos(std::min(dot, 1.0));
    const double s = std::sin(theta);
    mixed = (std::sin((1.0 - alpha) * theta) / s) * qa.coeffs() +
            (std::sin(alpha * theta) / s) * qb.coeffs();
  }
  Quat out;
  out.coeffs() = mixed.normalized();
  return out;
}

/// Transition path from `start` to `end`: frame k uses alpha = k / (frames - 1),
/// rotation by slerp and center by linear interpolation. Endpoints are copied.
inline Trajectory make_trajectory(const CameraPose& start, const CameraPose& end, int frames) {
  if (frames < 2) throw Error(Errc::domain, "trajectory needs at least 2 frames");
  const Quat qa(start.rotation);
  const Quat qb(end.rotation);
  Trajectory traj;
  traj.poses.reserve(static_cast<std::size_t>(frames));
  traj.poses.push_back(start);
  for (int k = 1; k + 1 < frames; ++k) {
    const double alpha = static_cast<double>(k) / (frames - 1);
    CameraPose p;
    p.rotation = slerp(qa.normalized(), qb.normalized(), alpha).toRotationMatrix();
    p.translation = (1.0 - alpha) * start.translation + alpha * end.translation;
    traj.poses.push_back(p);
  }
  traj.poses.push_back(end);
  return traj;
}

/// Index of the training camera whose center is closest to the target's;
/// ties go to the lowest index.
inline std::size_t nearest_training_view(const std::vector<CameraPose>& train,
                                         const CameraPose& target) {
  if (train.empty()) throw Error(Errc::domain, "no training views");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < train.size(); ++i) {
    const double d = (train[i].center() - target.center()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace viewx
