#pragma once

#include "snerf/camera.hpp"
#include "snerf/field.hpp"
#include "snerf/image.hpp"
#include "snerf/scene.hpp"

#include <cstdint>
#include <vector>

namespace snerf {

struct PixelId {
  int view = 0;
  int row = 0;
  int col = 0;
  bool operator==(const PixelId&) const = default;
};

/// Rays stored column-wise: origins and directions are 3 x M.
template <typename Scalar>
struct RayBatchT {
  MatrixX<Scalar> origins;
  MatrixX<Scalar> directions;
  VectorX<Scalar> t_near;
  VectorX<Scalar> t_far;
  std::vector<PixelId> pixel_ids;
  std::vector<std::uint8_t> hits;  ///< 0 where the ray misses the scene bounds

  Index size() const { return origins.cols(); }
  RayBatchT subset(const std::vector<Index>& idx) const;
};

using RayBatch = RayBatchT<float>;

struct RenderConfig {
  int n_samples = 64;
  bool stratified = false;
  Vector3d background = Vector3d::Ones();
  std::uint64_t seed = 0;
  int tile_size = 32;  ///< render_image tile edge; never changes pixel values

  void validate() const;
  bool operator==(const RenderConfig&) const = default;
};

/// Smallest admissible t_near.
inline constexpr double kMinNear = 1e-3;

template <typename Scalar>
RayBatchT<Scalar> generate_rays(const CameraModel& camera, const std::vector<PixelId>& pixels, const Bounds& bounds);

std::vector<PixelId> all_pixels(const CameraModel& camera, int view = 0);

/// Quadrature points along each ray. Column m of `t` and `deltas` belongs to ray m;
/// positions are 3 x (M * n) with sample k of ray m at column m * n + k.
template <typename Scalar>
struct SampleSet {
  MatrixX<Scalar> t;
  MatrixX<Scalar> deltas;
  MatrixX<Scalar> positions;
};

template <typename Scalar>
SampleSet<Scalar> sample_points(const RayBatchT<Scalar>& rays, const RenderConfig& cfg);

template <typename Scalar>
struct CompositeResult {
  Vec3<Scalar> pixel;
  Scalar opacity;
  VectorX<Scalar> weights;
  VectorX<Scalar> transmittance;  ///< n + 1 entries; the last is the residual transmittance
};

/// Front-to-back alpha compositing of n samples (colors 3 x n) over `background`.
template <typename Scalar>
CompositeResult<Scalar> composite(const Eigen::Ref<const MatrixX<Scalar>>& colors,
                                  const Eigen::Ref<const VectorX<Scalar>>& sigmas,
                                  const Eigen::Ref<const VectorX<Scalar>>& deltas, const Vec3<Scalar>& background);

/// Vector-Jacobian product of composite(): fills d(loss)/d(colors) and d(loss)/d(sigmas).
template <typename Scalar>
void composite_backward(const Eigen::Ref<const MatrixX<Scalar>>& colors,
                        const Eigen::Ref<const VectorX<Scalar>>& deltas, const Vec3<Scalar>& background,
                        const CompositeResult<Scalar>& fwd, const Vec3<Scalar>& grad_pixel,
                        Eigen::Ref<MatrixX<Scalar>> grad_colors, Eigen::Ref<VectorX<Scalar>> grad_sigmas);

/// State retained by render_rays for the backward pass.
template <typename Scalar>
struct RenderCache {
  std::vector<Index> active;  ///< rays that intersect the bounds
  SampleSet<Scalar> samples;
  MatrixX<Scalar> sample_dirs;
  FieldCache<Scalar> field;
  std::vector<CompositeResult<Scalar>> composites;
};

/// Volume-renders each ray; returns colors as 3 x M. Throws NumericalError naming
/// the first ray whose result is not finite.
template <typename Scalar>
MatrixX<Scalar> render_rays(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                            const RenderConfig& cfg, RenderCache<Scalar>* cache = nullptr);

/// Accumulates d(loss)/d(params) given d(loss)/d(colors) (3 x M).
template <typename Scalar>
void render_rays_backward(const RadianceField<Scalar>& field, const RenderCache<Scalar>& cache,
                          const RenderConfig& cfg, const Eigen::Ref<const MatrixX<Scalar>>& grad_colors,
                          VectorX<Scalar>& grad_params);

/// Renders every pixel of `camera`. When `opacity` is given it receives the
/// accumulated opacity per pixel (1 channel, 0 where the ray misses the bounds).
template <typename Scalar>
ImageT<Scalar> render_image(const RadianceField<Scalar>& field, const CameraModel& camera, const RenderConfig& cfg,
                            int view = 0, ImageT<Scalar>* opacity = nullptr);

}  // namespace snerf
