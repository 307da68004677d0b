#pragma once

#include "snerf/field.hpp"
#include "snerf/renderer.hpp"
#include "snerf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

using namespace snerf;

/// Two trunk layers, small widths: under 200 parameters.
inline FieldArchitecture micro_arch() {
  FieldArchitecture a;
  a.pos_levels = 1;
  a.dir_levels = 1;
  a.trunk_depth = 2;
  a.trunk_width = 5;
  a.rgb_width = 4;
  return a;
}

/// Symmetric relative error with an absolute floor for near-zero entries.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Field whose every output is colour `rgb` and density `sigma`, independent of input.
template <typename Scalar>
RadianceField<Scalar> constant_field(const Bounds& bounds, const Vector3d& rgb, double sigma,
                                     const FieldArchitecture& arch = micro_arch()) {
  RadianceField<Scalar> f(arch, bounds, 1);
  f.parameters().setZero();
  // softplus(b) = sigma  =>  b = log(exp(sigma) - 1)
  const double b = sigma > 30.0 ? sigma : std::log(std::expm1(sigma));
  f.parameters()[f.density_layer().bias_offset] = Scalar(b);
  for (int k = 0; k < 3; ++k)
    f.parameters()[f.rgb_output_layer().bias_offset + k] = Scalar(std::log(rgb[k] / (1.0 - rgb[k])));
  return f;
}

/// Scene with a single sphere at the origin and a camera on +z at `distance`.
inline SceneDescription sphere_scene(double radius = 0.5, const Vector3d& albedo = Vector3d(0.8, 0.3, 0.2)) {
  SceneDescription s;
  s.primitives.push_back({ShapeKind::sphere, Vector3d::Zero(), Vector3d::Constant(radius), albedo});
  return s;
}

inline CameraModel axis_camera(double distance, int size, double focal) {
  return look_at(Vector3d(0, 0, distance), Vector3d::Zero(), Vector3d::UnitY(), focal, size, size);
}

template <typename Scalar>
ImageT<Scalar> random_image(int h, int w, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ImageT<Scalar> img(h, w, 3);
  for (Index i = 0; i < img.pixels().size(); ++i) img.pixels().data()[i] = Scalar(u(rng));
  return img;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("snerf_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
