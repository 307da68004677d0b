#pragma once

#include "snerf/camera.hpp"
#include "snerf/image.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace snerf {

enum class ShapeKind { sphere, box, ground_plane };

/// One scene primitive. `size` is the radius for spheres, the half extents for
/// boxes and (half extent x, unused, half extent z) for a ground plane, which is
/// a horizontal quad at height center.y().
struct Primitive {
  ShapeKind shape = ShapeKind::sphere;
  Vector3d center = Vector3d::Zero();
  Vector3d size = Vector3d::Constant(0.5);
  Vector3d albedo = Vector3d::Constant(0.8);

  bool operator==(const Primitive&) const = default;
};

struct Bounds {
  Vector3d lo = Vector3d::Constant(-1.0);
  Vector3d hi = Vector3d::Constant(1.0);

  Vector3d center() const { return 0.5 * (lo + hi); }
  Vector3d half_extent() const { return 0.5 * (hi - lo); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Vector3d& p, double tol = 1e-12) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  bool operator==(const Bounds&) const = default;
};

struct SceneDescription {
  std::vector<Primitive> primitives;
  Vector3d background_color = Vector3d::Ones();
  Bounds bounds;
  /// Unit vector pointing from the surface toward the light.
  Vector3d light = Vector3d(0.4, 0.8, 0.45).normalized();
  double ambient = 0.25;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  bool operator==(const SceneDescription&) const = default;
};

/// Axis-aligned box enclosing a primitive.
Bounds primitive_extent(const Primitive& p);

struct GroundTruthView {
  ImageBuffer image;
  ImageT<float> depth;  ///< ray distance, +inf where the ray misses every primitive
  CameraModel camera;
};

/// Dense displacement from view i to view j, defined on view i's pixel grid.
struct FlowField {
  ImageT<float> flow;  ///< channel 0 = d(col), channel 1 = d(row)
  Mask visible;        ///< true = visible in both views (non-occluded)
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vector3d normal = Vector3d::Zero();
  int primitive = -1;
};

/// Closest intersection along origin + t * dir for t > t_min.
Hit intersect(const SceneDescription& scene, const Vector3d& origin, const Vector3d& dir, double t_min = 1e-9);

/// Lambertian radiance at a hit: albedo * (ambient + (1 - ambient) * max(0, n . light)).
Vector3d shade(const SceneDescription& scene, const Hit& hit);

SceneDescription build_scene(std::uint64_t seed, int n_primitives);

GroundTruthView trace_reference(const SceneDescription& scene, const CameraModel& camera);

/// Depth-agreement tolerance used for occlusion masking.
double depth_tolerance(const SceneDescription& scene);

/// Flow on view i's pixel grid pointing into view j. A pixel is marked visible when
/// its surface point reprojects inside view j, is the first hit along j's line of
/// sight, and every pixel of j's bilinear footprint at the reprojection sees the same
/// surface patch with matching depth. The last condition keeps resampling across a
/// silhouette or crease out of the evaluated set.
FlowField analytic_flow(const SceneDescription& scene, const CameraModel& cam_i, const CameraModel& cam_j);

enum class PathKind { orbit, line, spiral };

PathKind parse_path_kind(const std::string& s);
std::string to_string(PathKind k);

struct PathOptions {
  double radius = 4.5;
  double elevation_deg = 25.0;
  double arc_deg = 360.0;    ///< orbit/spiral angular span; a full circle excludes the duplicate end pose
  double line_length = 2.0;  ///< line: total sideways travel
  double fov_deg = 40.0;
  int width = 64;
  int height = 64;
};

std::vector<CameraModel> camera_path(PathKind kind, int n_frames, const SceneDescription& scene,
                                     const PathOptions& opts = {});

/// Orbit pose at an explicit azimuth (degrees); camera_path(orbit) samples this.
CameraModel orbit_camera(const SceneDescription& scene, double azimuth_deg, const PathOptions& opts);

/// Training views spread over the upper hemisphere (golden-angle spiral).
std::vector<CameraModel> hemisphere_cameras(int n, const SceneDescription& scene, const PathOptions& opts);

}  // namespace snerf
