#pragma once

#include "snerf/image.hpp"

#include <optional>

namespace snerf {

/// Pinhole camera. The camera frame looks down -z with +x right and +y up;
/// `rotation` and `translation` map camera coordinates to world coordinates.
struct CameraModel {
  double focal = 1.0;
  int width = 1;
  int height = 1;
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  Vector3d center() const { return translation; }
  Vector3d forward() const { return -rotation.col(2); }

  /// Unit world-space direction through the centre of pixel (row, col).
  Vector3d pixel_direction(double row, double col) const {
    const Vector3d d_cam((col + 0.5 - 0.5 * width) / focal, -(row + 0.5 - 0.5 * height) / focal, -1.0);
    return (rotation * d_cam).normalized();
  }

  /// Continuous pixel coordinates (row, col) of a world point; empty if behind the camera.
  std::optional<Eigen::Vector2d> project(const Vector3d& world) const {
    const Vector3d p = rotation.transpose() * (world - translation);
    if (p.z() >= -1e-12) return std::nullopt;
    const double col = focal * p.x() / -p.z() + 0.5 * width - 0.5;
    const double row = -focal * p.y() / -p.z() + 0.5 * height - 0.5;
    return Eigen::Vector2d(row, col);
  }

  void validate() const;

  bool operator==(const CameraModel&) const = default;
};

/// Camera at `eye` looking at `target`, with `up` resolving the roll.
CameraModel look_at(const Vector3d& eye, const Vector3d& target, const Vector3d& up, double focal, int width,
                    int height);

/// Same pose, different resolution; focal length scales with width.
CameraModel with_resolution(const CameraModel& cam, int width, int height);

}  // namespace snerf
