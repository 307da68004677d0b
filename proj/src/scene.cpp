#include "snerf/scene.hpp"

#include "snerf/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace snerf {

namespace {

constexpr double kPi = std::numbers::pi;

bool in_unit_range(const Vector3d& v) { return (v.array() >= 0.0).all() && (v.array() <= 1.0).all(); }

double deg(double d) { return d * kPi / 180.0; }

double focal_for(const PathOptions& o) { return 0.5 * o.width / std::tan(0.5 * deg(o.fov_deg)); }

// Ray/box slab test; returns entry and exit distances.
bool slab(const Vector3d& lo, const Vector3d& hi, const Vector3d& o, const Vector3d& d, double& t0, double& t1,
          int& axis0, int& axis1) {
  t0 = -INFINITY;
  t1 = INFINITY;
  axis0 = axis1 = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
  }
  return t0 <= t1;
}

}  // namespace

void CameraModel::validate() const {
  if (!(focal > 0.0)) throw std::invalid_argument("camera: focal must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("camera: width and height must be >= 1");
  if ((rotation.transpose() * rotation - Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(rotation.determinant() - 1.0) > 1e-6)
    throw std::invalid_argument("camera: rotation is not a proper rotation");
}

CameraModel look_at(const Vector3d& eye, const Vector3d& target, const Vector3d& up, double focal, int width,
                    int height) {
  const Vector3d back = (eye - target).normalized();
  Vector3d right = up.cross(back);
  if (right.norm() < 1e-9) right = Vector3d::UnitX().cross(back);
  right.normalize();
  const Vector3d cam_up = back.cross(right);
  CameraModel cam;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = cam_up;
  cam.rotation.col(2) = back;
  cam.translation = eye;
  return cam;
}

CameraModel with_resolution(const CameraModel& cam, int width, int height) {
  CameraModel out = cam;
  out.focal = cam.focal * double(width) / double(cam.width);
  out.width = width;
  out.height = height;
  return out;
}

void SceneDescription::validate() const {
  if (!in_unit_range(background_color)) throw std::invalid_argument("scene: background color outside [0,1]");
  if (std::abs(light.norm() - 1.0) > 1e-9) throw std::invalid_argument("scene: light direction must be unit");
  if (!(ambient >= 0.0 && ambient <= 1.0)) throw std::invalid_argument("scene: ambient outside [0,1]");
  if ((bounds.hi.array() <= bounds.lo.array()).any()) throw std::invalid_argument("scene: empty bounds");
  for (const auto& p : primitives) {
    if (!in_unit_range(p.albedo)) throw std::invalid_argument("scene: albedo outside [0,1]");
    if ((p.size.array() < 0.0).any()) throw std::invalid_argument("scene: negative primitive size");
    const Bounds e = primitive_extent(p);
    if (!bounds.contains(e.lo, 1e-9) || !bounds.contains(e.hi, 1e-9))
      throw std::invalid_argument("scene: primitive outside bounds");
  }
}

Bounds primitive_extent(const Primitive& p) {
  switch (p.shape) {
    case ShapeKind::sphere:
      return {(p.center.array() - p.size.x()).matrix(), (p.center.array() + p.size.x()).matrix()};
    case ShapeKind::box:
      return {p.center - p.size, p.center + p.size};
    case ShapeKind::ground_plane: {
      const Vector3d h(p.size.x(), 0.0, p.size.z());
      return {p.center - h, p.center + h};
    }
  }
  return {};
}

Hit intersect(const SceneDescription& scene, const Vector3d& o, const Vector3d& d, double t_min) {
  Hit best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    double t = INFINITY;
    Vector3d n = Vector3d::Zero();
    switch (p.shape) {
      case ShapeKind::sphere: {
        const Vector3d oc = o - p.center;
        const double b = oc.dot(d);
        const double c = oc.squaredNorm() - p.size.x() * p.size.x();
        const double disc = b * b - c;
        if (disc < 0.0) break;
        const double s = std::sqrt(disc);
        double cand = -b - s;
        if (cand <= t_min) cand = -b + s;
        if (cand <= t_min) break;
        t = cand;
        n = (o + t * d - p.center).normalized();
        break;
      }
      case ShapeKind::box: {
        double t0, t1;
        int a0, a1;
        if (!slab(p.center - p.size, p.center + p.size, o, d, t0, t1, a0, a1)) break;
        int axis = a0;
        double cand = t0;
        if (cand <= t_min) {
          cand = t1;
          axis = a1;
        }
        if (cand <= t_min) break;
        t = cand;
        n[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
        break;
      }
      case ShapeKind::ground_plane: {
        if (std::abs(d.y()) < 1e-15) break;
        const double cand = (p.center.y() - o.y()) / d.y();
        if (cand <= t_min) break;
        const Vector3d q = o + cand * d;
        if (std::abs(q.x() - p.center.x()) > p.size.x() || std::abs(q.z() - p.center.z()) > p.size.z()) break;
        t = cand;
        n = Vector3d(0.0, d.y() > 0.0 ? -1.0 : 1.0, 0.0);
        break;
      }
    }
    if (t < best.t) {
      best.t = t;
      best.normal = n;
      best.primitive = static_cast<int>(i);
    }
  }
  return best;
}

Vector3d shade(const SceneDescription& scene, const Hit& hit) {
  if (hit.primitive < 0) return scene.background_color;
  const double lambert = std::max(0.0, hit.normal.dot(scene.light));
  return scene.primitives[std::size_t(hit.primitive)].albedo * (scene.ambient + (1.0 - scene.ambient) * lambert);
}

SceneDescription build_scene(std::uint64_t seed, int n_primitives) {
  n_primitives = std::clamp(n_primitives, 1, 16);
  Rng rng(substream(seed, "scene"));
  SceneDescription scene;
  const Bounds& b = scene.bounds;
  for (int i = 0; i < n_primitives; ++i) {
    Primitive best;
    double best_gap = -INFINITY;
    // Rejection sampling that prefers layouts with little interpenetration.
    for (int attempt = 0; attempt < 64; ++attempt) {
      Primitive p;
      p.shape = uniform(rng) < 0.6 ? ShapeKind::sphere : ShapeKind::box;
      if (p.shape == ShapeKind::sphere) {
        p.size = Vector3d::Constant(uniform(rng, 0.3, 0.55));
      } else {
        p.size = Vector3d(uniform(rng, 0.2, 0.45), uniform(rng, 0.2, 0.45), uniform(rng, 0.2, 0.45));
      }
      const Vector3d ext = p.shape == ShapeKind::sphere ? Vector3d::Constant(p.size.x()) : p.size;
      for (int a = 0; a < 3; ++a) p.center[a] = uniform(rng, b.lo[a] + ext[a], b.hi[a] - ext[a]);
      for (int a = 0; a < 3; ++a) p.albedo[a] = uniform(rng, 0.15, 0.95);
      double gap = INFINITY;
      for (const auto& q : scene.primitives) {
        const double rq = primitive_extent(q).half_extent().maxCoeff();
        gap = std::min(gap, (p.center - q.center).norm() - ext.maxCoeff() - rq);
      }
      if (gap > best_gap) {
        best_gap = gap;
        best = p;
      }
      if (gap >= 0.0) break;
    }
    scene.primitives.push_back(best);
  }
  scene.validate();
  return scene;
}

GroundTruthView trace_reference(const SceneDescription& scene, const CameraModel& camera) {
  camera.validate();
  GroundTruthView view;
  view.camera = camera;
  view.image = ImageBuffer(camera.height, camera.width, 3);
  view.depth = ImageT<float>(camera.height, camera.width, 1);
  for (int r = 0; r < camera.height; ++r) {
    for (int c = 0; c < camera.width; ++c) {
      const Vector3d d = camera.pixel_direction(r, c);
      const Hit hit = intersect(scene, camera.center(), d);
      const Vector3d rgb = shade(scene, hit);
      for (int ch = 0; ch < 3; ++ch) view.image(r, c, ch) = static_cast<float>(rgb[ch]);
      view.depth(r, c) = hit.primitive < 0 ? std::numeric_limits<float>::infinity() : static_cast<float>(hit.t);
    }
  }
  return view;
}

double depth_tolerance(const SceneDescription& scene) { return 1e-3 * scene.bounds.diameter(); }

namespace {

// Smooth surface patch a hit lies on: one per sphere or plane, one per box face.
int surface_patch(const SceneDescription& scene, const Hit& h) {
  if (h.primitive < 0) return -1;
  int face = 0;
  if (scene.primitives[std::size_t(h.primitive)].shape == ShapeKind::box) {
    Index axis = 0;
    h.normal.cwiseAbs().maxCoeff(&axis);
    face = int(axis) * 2 + (h.normal[axis] > 0.0 ? 1 : 0);
  }
  return h.primitive * 8 + face;
}

}  // namespace

FlowField analytic_flow(const SceneDescription& scene, const CameraModel& cam_i, const CameraModel& cam_j) {
  cam_i.validate();
  cam_j.validate();
  const double tau = depth_tolerance(scene);
  // View j's depth buffer stored as inverse camera-space z (0 on misses). Inverse z is
  // affine in image coordinates across a plane, so bilinear lookups are exact on faces.
  const int hj = cam_j.height, wj = cam_j.width;
  // A patch id buffer alongside it catches creases, where depth is continuous but shading is not.
  std::vector<double> inv_z(std::size_t(hj) * std::size_t(wj), 0.0);
  std::vector<int> patch(inv_z.size(), -1);
  for (int r = 0; r < hj; ++r)
    for (int c = 0; c < wj; ++c) {
      const Vector3d d = cam_j.pixel_direction(r, c);
      const Hit h = intersect(scene, cam_j.center(), d);
      const std::size_t k = std::size_t(r) * std::size_t(wj) + std::size_t(c);
      patch[k] = surface_patch(scene, h);
      if (h.primitive >= 0) inv_z[k] = 1.0 / (h.t * d.dot(cam_j.forward()));
    }

  FlowField out;
  out.flow = ImageT<float>(cam_i.height, cam_i.width, 2);
  out.visible = Mask(cam_i.height, cam_i.width, false);
  for (int r = 0; r < cam_i.height; ++r) {
    for (int c = 0; c < cam_i.width; ++c) {
      const Vector3d d = cam_i.pixel_direction(r, c);
      const Hit hit = intersect(scene, cam_i.center(), d);
      if (hit.primitive < 0) continue;
      const Vector3d x = cam_i.center() + hit.t * d;
      const auto proj = cam_j.project(x);
      if (!proj) continue;
      const double row = (*proj)[0];
      const double col = (*proj)[1];
      out.flow(r, c, 0) = static_cast<float>(col - c);
      out.flow(r, c, 1) = static_cast<float>(row - r);
      if (row < 0.0 || row > hj - 1 || col < 0.0 || col > wj - 1) continue;
      // Exact test: the first surface seen by view j along the line of sight to x is x.
      const Vector3d to_x = x - cam_j.center();
      const double dist = to_x.norm();
      const Hit back = intersect(scene, cam_j.center(), to_x / dist);
      if (std::abs(back.t - dist) > tau) continue;
      // Depth and patch buffers over the bilinear footprint, so a sample that would
      // blend another surface, face or the background is not counted as visible.
      const int r0 = int(std::floor(row)), c0 = int(std::floor(col));
      const int r1 = std::min(r0 + 1, hj - 1), c1 = std::min(c0 + 1, wj - 1);
      const double fr = row - r0, fc = col - c0;
      auto at = [&](int rr, int cc) { return std::size_t(rr) * std::size_t(wj) + std::size_t(cc); };
      const int own = surface_patch(scene, hit);
      const std::array<std::size_t, 4> idx{at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1)};
      const std::array<double, 4> wt{(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
      double interp = 0.0;
      bool same_patch = true;
      for (std::size_t k = 0; k < 4; ++k) {
        interp += wt[k] * inv_z[idx[k]];
        // Corners with negligible weight cannot contaminate the sample.
        if (wt[k] > 1e-9) same_patch = same_patch && patch[idx[k]] == own;
      }
      if (!same_patch) continue;
      const double z = to_x.dot(cam_j.forward());
      out.visible.set(r, c, interp > 0.0 && std::abs(1.0 / interp - z) <= tau);
    }
  }
  return out;
}

PathKind parse_path_kind(const std::string& s) {
  if (s == "orbit") return PathKind::orbit;
  if (s == "line") return PathKind::line;
  if (s == "spiral") return PathKind::spiral;
  throw std::invalid_argument("unknown camera path kind: " + s);
}

std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::orbit:
      return "orbit";
    case PathKind::line:
      return "line";
    case PathKind::spiral:
      return "spiral";
  }
  return "orbit";
}

CameraModel orbit_camera(const SceneDescription& scene, double azimuth_deg, const PathOptions& o) {
  const Vector3d target = scene.bounds.center();
  const double el = deg(o.elevation_deg);
  const double az = deg(azimuth_deg);
  const Vector3d eye =
      target + o.radius * Vector3d(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  return look_at(eye, target, Vector3d::UnitY(), focal_for(o), o.width, o.height);
}

std::vector<CameraModel> camera_path(PathKind kind, int n_frames, const SceneDescription& scene,
                                     const PathOptions& o) {
  if (n_frames < 2) throw std::invalid_argument("camera_path: n_frames must be >= 2");
  std::vector<CameraModel> cams;
  cams.reserve(std::size_t(n_frames));
  const bool closed = o.arc_deg >= 360.0;
  const double step = closed ? o.arc_deg / n_frames : o.arc_deg / (n_frames - 1);
  switch (kind) {
    case PathKind::orbit:
      for (int k = 0; k < n_frames; ++k) cams.push_back(orbit_camera(scene, k * step, o));
      break;
    case PathKind::line: {
      const CameraModel mid = orbit_camera(scene, 0.0, o);
      const Vector3d right = mid.rotation.col(0);
      for (int k = 0; k < n_frames; ++k) {
        CameraModel c = mid;
        const double s = (double(k) / (n_frames - 1) - 0.5) * o.line_length;
        c.translation = mid.translation + s * right;
        cams.push_back(c);
      }
      break;
    }
    case PathKind::spiral: {
      for (int k = 0; k < n_frames; ++k) {
        PathOptions ok = o;
        const double phase = 2.0 * kPi * double(k) / n_frames;
        ok.elevation_deg = o.elevation_deg + 10.0 * std::sin(phase);
        ok.radius = o.radius * (1.0 + 0.05 * std::cos(phase));
        cams.push_back(orbit_camera(scene, k * step, ok));
      }
      break;
    }
  }
  return cams;
}

std::vector<CameraModel> hemisphere_cameras(int n, const SceneDescription& scene, const PathOptions& o) {
  if (n < 1) throw std::invalid_argument("hemisphere_cameras: n must be >= 1");
  std::vector<CameraModel> cams;
  const double golden = 180.0 * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    PathOptions ok = o;
    const double frac = n == 1 ? 0.5 : double(k) / (n - 1);
    ok.elevation_deg = 8.0 + 52.0 * frac;
    cams.push_back(orbit_camera(scene, k * golden, ok));
  }
  return cams;
}

}  // namespace snerf
