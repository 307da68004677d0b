#include "snerf/renderer.hpp"

#include "snerf/errors.hpp"
#include "snerf/instrument.hpp"
#include "snerf/rng.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace snerf {

namespace {

std::uint64_t pixel_key(const PixelId& p) {
  return (std::uint64_t(std::uint32_t(p.view)) << 40) ^ (std::uint64_t(std::uint32_t(p.row)) << 20) ^
         std::uint64_t(std::uint32_t(p.col));
}

}  // namespace

void RenderConfig::validate() const {
  if (n_samples < 2) throw std::invalid_argument("RenderConfig: n_samples must be >= 2");
  if ((background.array() < 0.0).any() || (background.array() > 1.0).any())
    throw std::invalid_argument("RenderConfig: background outside [0,1]");
  if (tile_size < 1) throw std::invalid_argument("RenderConfig: tile_size must be >= 1");
}

template <typename Scalar>
RayBatchT<Scalar> RayBatchT<Scalar>::subset(const std::vector<Index>& idx) const {
  RayBatchT out;
  const Index m = Index(idx.size());
  out.origins.resize(3, m);
  out.directions.resize(3, m);
  out.t_near.resize(m);
  out.t_far.resize(m);
  for (Index i = 0; i < m; ++i) {
    const Index s = idx[std::size_t(i)];
    out.origins.col(i) = origins.col(s);
    out.directions.col(i) = directions.col(s);
    out.t_near[i] = t_near[s];
    out.t_far[i] = t_far[s];
    out.pixel_ids.push_back(pixel_ids[std::size_t(s)]);
    out.hits.push_back(hits[std::size_t(s)]);
  }
  return out;
}

std::vector<PixelId> all_pixels(const CameraModel& camera, int view) {
  std::vector<PixelId> px;
  px.reserve(std::size_t(camera.width) * camera.height);
  for (int r = 0; r < camera.height; ++r)
    for (int c = 0; c < camera.width; ++c) px.push_back({view, r, c});
  return px;
}

template <typename Scalar>
RayBatchT<Scalar> generate_rays(const CameraModel& camera, const std::vector<PixelId>& pixels, const Bounds& bounds) {
  const Index m = Index(pixels.size());
  RayBatchT<Scalar> rays;
  rays.origins.resize(3, m);
  rays.directions.resize(3, m);
  rays.t_near.resize(m);
  rays.t_far.resize(m);
  rays.pixel_ids = pixels;
  rays.hits.assign(pixels.size(), 0);
  const Vector3d o = camera.center();
  for (Index i = 0; i < m; ++i) {
    const PixelId& p = pixels[std::size_t(i)];
    if (p.row < 0 || p.row >= camera.height || p.col < 0 || p.col >= camera.width) {
      std::ostringstream msg;
      msg << "generate_rays: pixel (" << p.row << ", " << p.col << ") outside " << camera.height << "x"
          << camera.width << " image";
      throw std::out_of_range(msg.str());
    }
    const Vector3d d = camera.pixel_direction(p.row, p.col);
    double t0 = -INFINITY, t1 = INFINITY;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(d[a]) < 1e-15) {
        if (o[a] < bounds.lo[a] || o[a] > bounds.hi[a]) t1 = -INFINITY;
        continue;
      }
      double ta = (bounds.lo[a] - o[a]) / d[a];
      double tb = (bounds.hi[a] - o[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    t0 = std::max(t0, kMinNear);
    const bool hit = t1 > t0 + 1e-9;
    rays.origins.col(i) = o.cast<Scalar>();
    rays.directions.col(i) = d.cast<Scalar>();
    rays.t_near[i] = Scalar(hit ? t0 : kMinNear);
    rays.t_far[i] = Scalar(hit ? t1 : 2.0 * kMinNear);
    rays.hits[std::size_t(i)] = hit ? 1 : 0;
  }
  return rays;
}

template <typename Scalar>
SampleSet<Scalar> sample_points(const RayBatchT<Scalar>& rays, const RenderConfig& cfg) {
  cfg.validate();
  const Index m = rays.size();
  const int n = cfg.n_samples;
  SampleSet<Scalar> s;
  s.t.resize(n, m);
  s.deltas.resize(n, m);
  s.positions.resize(3, m * n);
  for (Index r = 0; r < m; ++r) {
    const Scalar tn = rays.t_near[r];
    const Scalar tf = rays.t_far[r];
    const Scalar bin = (tf - tn) / Scalar(n);
    const std::uint64_t key = cfg.stratified ? substream(cfg.seed, pixel_key(rays.pixel_ids[std::size_t(r)])) : 0;
    for (int k = 0; k < n; ++k) {
      const Scalar u = cfg.stratified ? Scalar(hashed_uniform(key + std::uint64_t(k))) : Scalar(0.5);
      s.t(k, r) = std::min(tf, tn + (Scalar(k) + u) * bin);
    }
    for (int k = 0; k + 1 < n; ++k) s.deltas(k, r) = s.t(k + 1, r) - s.t(k, r);
    s.deltas(n - 1, r) = tf - s.t(n - 1, r);
    for (int k = 0; k < n; ++k)
      s.positions.col(r * n + k) = rays.origins.col(r) + s.t(k, r) * rays.directions.col(r);
  }
  return s;
}

template <typename Scalar>
CompositeResult<Scalar> composite(const Eigen::Ref<const MatrixX<Scalar>>& colors,
                                  const Eigen::Ref<const VectorX<Scalar>>& sigmas,
                                  const Eigen::Ref<const VectorX<Scalar>>& deltas, const Vec3<Scalar>& background) {
  const Index n = sigmas.size();
  CompositeResult<Scalar> out;
  out.weights.resize(n);
  out.transmittance.resize(n + 1);
  out.transmittance[0] = Scalar(1);
  Vec3<Scalar> acc = Vec3<Scalar>::Zero();
  Scalar opacity(0);
  for (Index k = 0; k < n; ++k) {
    const Scalar keep = std::exp(-sigmas[k] * deltas[k]);
    const Scalar w = out.transmittance[k] * (Scalar(1) - keep);
    out.weights[k] = w;
    out.transmittance[k + 1] = out.transmittance[k] * keep;
    acc += w * colors.col(k);
    opacity += w;
  }
  out.opacity = opacity;
  out.pixel = acc + (Scalar(1) - opacity) * background;
  return out;
}

template <typename Scalar>
void composite_backward(const Eigen::Ref<const MatrixX<Scalar>>& colors,
                        const Eigen::Ref<const VectorX<Scalar>>& deltas, const Vec3<Scalar>& background,
                        const CompositeResult<Scalar>& fwd, const Vec3<Scalar>& grad_pixel,
                        Eigen::Ref<MatrixX<Scalar>> grad_colors, Eigen::Ref<VectorX<Scalar>> grad_sigmas) {
  const Index n = deltas.size();
  const Scalar g_bg = grad_pixel.dot(background);
  // Sum over j > k of w_j * g.(c_j - bg), built back to front.
  Scalar behind(0);
  for (Index k = n; k-- > 0;) {
    const Scalar g_c = grad_pixel.dot(colors.col(k)) - g_bg;
    grad_colors.col(k) = fwd.weights[k] * grad_pixel;
    grad_sigmas[k] = deltas[k] * (fwd.transmittance[k + 1] * g_c - behind);
    behind += fwd.weights[k] * g_c;
  }
}

template <typename Scalar>
MatrixX<Scalar> render_rays(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                            const RenderConfig& cfg, RenderCache<Scalar>* cache) {
  RenderCache<Scalar> local;
  RenderCache<Scalar>& c = cache ? *cache : local;
  const Index m = rays.size();
  const int n = cfg.n_samples;
  const Vec3<Scalar> bg = cfg.background.cast<Scalar>();

  c.active.clear();
  for (Index i = 0; i < m; ++i)
    if (rays.hits[std::size_t(i)]) c.active.push_back(i);
  const RayBatchT<Scalar> live = rays.subset(c.active);
  c.samples = sample_points(live, cfg);
  const Index ma = live.size();
  c.sample_dirs.resize(3, ma * n);
  for (Index i = 0; i < ma; ++i) c.sample_dirs.middleCols(i * n, n).colwise() = live.directions.col(i);

  MatrixX<Scalar> colors = bg.replicate(1, m);
  c.composites.clear();
  if (ma == 0) return colors;
  field.forward(c.samples.positions, c.sample_dirs, c.field);
  c.composites.reserve(std::size_t(ma));
  for (Index i = 0; i < ma; ++i) {
    c.composites.push_back(composite<Scalar>(c.field.rgb.middleCols(i * n, n),
                                             c.field.sigma.segment(i * n, n).transpose(), c.samples.deltas.col(i),
                                             bg));
    const auto& res = c.composites.back();
    if (!res.pixel.allFinite() || !std::isfinite(res.opacity)) {
      const PixelId& p = live.pixel_ids[std::size_t(i)];
      std::ostringstream msg;
      msg << "render_rays: non-finite radiance for ray " << c.active[std::size_t(i)] << " (view " << p.view
          << ", row " << p.row << ", col " << p.col << ")";
      throw NumericalError(msg.str());
    }
    colors.col(c.active[std::size_t(i)]) = res.pixel;
  }
  return colors;
}

template <typename Scalar>
void render_rays_backward(const RadianceField<Scalar>& field, const RenderCache<Scalar>& cache,
                          const RenderConfig& cfg, const Eigen::Ref<const MatrixX<Scalar>>& grad_colors,
                          VectorX<Scalar>& grad_params) {
  instrument::GradientPath path(instrument::Subsystem::renderer);
  if (grad_params.size() != field.parameter_count()) grad_params = VectorX<Scalar>::Zero(field.parameter_count());
  const Index ma = Index(cache.active.size());
  if (ma == 0) return;
  const int n = cfg.n_samples;
  const Vec3<Scalar> bg = cfg.background.cast<Scalar>();
  MatrixX<Scalar> g_rgb(3, ma * n);
  VectorX<Scalar> g_sigma(ma * n);
  for (Index i = 0; i < ma; ++i) {
    composite_backward<Scalar>(cache.field.rgb.middleCols(i * n, n), cache.samples.deltas.col(i), bg,
                               cache.composites[std::size_t(i)], grad_colors.col(cache.active[std::size_t(i)]),
                               g_rgb.middleCols(i * n, n), g_sigma.segment(i * n, n));
  }
  field.backward(cache.field, g_rgb, g_sigma.transpose(), grad_params);
}

template <typename Scalar>
ImageT<Scalar> render_image(const RadianceField<Scalar>& field, const CameraModel& camera, const RenderConfig& cfg,
                            int view, ImageT<Scalar>* opacity) {
  cfg.validate();
  ImageT<Scalar> img(camera.height, camera.width, 3);
  if (opacity) *opacity = ImageT<Scalar>(camera.height, camera.width, 1);
  RenderCache<Scalar> cache;
  const int ts = cfg.tile_size;
  std::vector<PixelId> px;
  for (int r0 = 0; r0 < camera.height; r0 += ts) {
    for (int c0 = 0; c0 < camera.width; c0 += ts) {
      px.clear();
      for (int r = r0; r < std::min(r0 + ts, camera.height); ++r)
        for (int c = c0; c < std::min(c0 + ts, camera.width); ++c) px.push_back({view, r, c});
      const auto rays = generate_rays<Scalar>(camera, px, field.bounds());
      const MatrixX<Scalar> colors = render_rays(field, rays, cfg, opacity ? &cache : nullptr);
      for (std::size_t i = 0; i < px.size(); ++i)
        img.pixel(px[i].row, px[i].col) = colors.col(Index(i)).transpose();
      if (opacity)
        for (std::size_t k = 0; k < cache.active.size(); ++k) {
          const PixelId& p = px[std::size_t(cache.active[k])];
          (*opacity)(p.row, p.col, 0) = cache.composites[k].opacity;
        }
    }
  }
  return img;
}

#define SNERF_INSTANTIATE(S)                                                                                       \
  template struct RayBatchT<S>;                                                                                    \
  template RayBatchT<S> generate_rays<S>(const CameraModel&, const std::vector<PixelId>&, const Bounds&);         \
  template SampleSet<S> sample_points<S>(const RayBatchT<S>&, const RenderConfig&);                                \
  template CompositeResult<S> composite<S>(const Eigen::Ref<const MatrixX<S>>&, const Eigen::Ref<const VectorX<S>>&, \
                                           const Eigen::Ref<const VectorX<S>>&, const Vec3<S>&);                   \
  template void composite_backward<S>(const Eigen::Ref<const MatrixX<S>>&, const Eigen::Ref<const VectorX<S>>&,    \
                                      const Vec3<S>&, const CompositeResult<S>&, const Vec3<S>&,                   \
                                      Eigen::Ref<MatrixX<S>>, Eigen::Ref<VectorX<S>>);                             \
  template MatrixX<S> render_rays<S>(const RadianceField<S>&, const RayBatchT<S>&, const RenderConfig&,            \
                                     RenderCache<S>*);                                                             \
  template void render_rays_backward<S>(const RadianceField<S>&, const RenderCache<S>&, const RenderConfig&,       \
                                        const Eigen::Ref<const MatrixX<S>>&, VectorX<S>&);                         \
  template ImageT<S> render_image<S>(const RadianceField<S>&, const CameraModel&, const RenderConfig&, int, \
                                     ImageT<S>*);

SNERF_INSTANTIATE(float)
SNERF_INSTANTIATE(double)

#undef SNERF_INSTANTIATE

}  // namespace snerf
