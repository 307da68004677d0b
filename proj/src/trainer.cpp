#include "snerf/trainer.hpp"

#include "snerf/errors.hpp"
#include "snerf/instrument.hpp"
#include "snerf/rng.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace snerf {

LossNorm parse_loss_norm(const std::string& s) {
  if (s == "squared") return LossNorm::squared;
  if (s == "l2") return LossNorm::l2;
  throw std::invalid_argument("unknown loss norm '" + s + "'");
}

std::string to_string(LossNorm n) { return n == LossNorm::squared ? "squared" : "l2"; }

void TrainConfig::validate() const {
  if (T < 1) throw std::invalid_argument("TrainConfig: T must be >= 1");
  if (K < 0) throw std::invalid_argument("TrainConfig: K must be >= 0 (0 selects every view)");
  if (fit_steps < 0) throw std::invalid_argument("TrainConfig: fit_steps must be >= 0");
  if (batch_rays < 1) throw std::invalid_argument("TrainConfig: batch_rays must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("TrainConfig: lr_decay must be in (0, 1]");
  if (eval_rays < 1) throw std::invalid_argument("TrainConfig: eval_rays must be >= 1");
}

void ViewDataset::validate() const {
  if (entries.empty()) throw std::invalid_argument("ViewDataset: empty");
  const auto& first = entries.front().target;
  for (const auto& e : entries) {
    if (!e.target.same_shape(first) || e.target.channels() != 3)
      throw std::invalid_argument("ViewDataset: targets must share dimensions");
    if (e.camera.height != e.target.height() || e.camera.width != e.target.width())
      throw std::invalid_argument("ViewDataset: camera resolution differs from its target");
  }
}

template <typename Scalar>
Scalar nerf_loss(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                 const Eigen::Ref<const MatrixX<Scalar>>& targets, const RenderConfig& render, LossNorm norm,
                 VectorX<Scalar>* grad) {
  if (targets.rows() != 3 || targets.cols() != rays.size())
    throw std::invalid_argument("nerf_loss: targets must be 3 x M with M = number of rays");
  if (rays.size() == 0) throw std::invalid_argument("nerf_loss: empty batch");
  RenderCache<Scalar> cache;
  const MatrixX<Scalar> colors = render_rays(field, rays, render, grad ? &cache : nullptr);
  const MatrixX<Scalar> diff = colors - targets;
  const Scalar m = Scalar(rays.size());
  Scalar loss;
  MatrixX<Scalar> g;
  if (norm == LossNorm::squared) {
    loss = diff.squaredNorm() / m;
    if (grad) g = (Scalar(2) / m) * diff;
  } else {
    const RowVectorX<Scalar> len = diff.colwise().norm();
    loss = len.sum() / m;
    if (grad) {
      g.resize(3, diff.cols());
      for (Index i = 0; i < diff.cols(); ++i)
        if (len[i] > Scalar(0))
          g.col(i) = diff.col(i) / (len[i] * m);
        else
          g.col(i).setZero();
    }
  }
  if (grad) render_rays_backward<Scalar>(field, cache, render, g, *grad);
  return loss;
}

namespace {

struct DatasetRays {
  RayBatch rays;
  MatrixX<float> targets;
};

DatasetRays dataset_rays(const ViewDataset& dataset, const Bounds& bounds) {
  DatasetRays out;
  std::vector<RayBatch> parts;
  Index total = 0;
  for (std::size_t v = 0; v < dataset.entries.size(); ++v) {
    const auto& e = dataset.entries[v];
    parts.push_back(generate_rays<float>(e.camera, all_pixels(e.camera, int(v)), bounds));
    total += parts.back().size();
  }
  out.rays.origins.resize(3, total);
  out.rays.directions.resize(3, total);
  out.rays.t_near.resize(total);
  out.rays.t_far.resize(total);
  out.targets.resize(3, total);
  Index at = 0;
  for (std::size_t v = 0; v < parts.size(); ++v) {
    const auto& p = parts[v];
    const Index n = p.size();
    out.rays.origins.middleCols(at, n) = p.origins;
    out.rays.directions.middleCols(at, n) = p.directions;
    out.rays.t_near.segment(at, n) = p.t_near;
    out.rays.t_far.segment(at, n) = p.t_far;
    out.rays.pixel_ids.insert(out.rays.pixel_ids.end(), p.pixel_ids.begin(), p.pixel_ids.end());
    out.rays.hits.insert(out.rays.hits.end(), p.hits.begin(), p.hits.end());
    out.targets.middleCols(at, n) = dataset.entries[v].target.pixels().transpose();
    at += n;
  }
  return out;
}

MatrixX<float> gather(const MatrixX<float>& m, const std::vector<Index>& idx) {
  MatrixX<float> out(m.rows(), Index(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(Index(i)) = m.col(idx[i]);
  return out;
}

std::vector<Index> draw(Rng& rng, Index count, Index population) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (auto& i : idx) i = Index(rng() % std::uint64_t(population));
  return idx;
}

}  // namespace

Field fit_field(Field field, const ViewDataset& dataset, const TrainConfig& cfg, const RenderConfig& render,
                FitReport* report) {
  cfg.validate();
  render.validate();
  dataset.validate();
  const DatasetRays all = dataset_rays(dataset, field.bounds());
  const Index population = all.rays.size();

  Rng eval_rng(substream(cfg.seed, "eval"));
  const auto eval_idx = draw(eval_rng, cfg.eval_rays, population);
  const RayBatch eval_rays = all.rays.subset(eval_idx);
  const MatrixX<float> eval_targets = gather(all.targets, eval_idx);
  RenderConfig eval_render = render;
  eval_render.stratified = false;
  auto eval_loss = [&] { return double(nerf_loss<float>(field, eval_rays, eval_targets, eval_render, cfg.norm)); };

  FitReport rep;
  rep.initial_eval_loss = eval_loss();

  const ParamRange range = cfg.freeze_geometry ? field.appearance_range() : ParamRange{0, field.parameter_count()};
  VectorX<float> m = VectorX<float>::Zero(range.size());
  VectorX<float> v = VectorX<float>::Zero(range.size());
  VectorX<float> grad;
  const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  Rng ray_rng(substream(cfg.seed, "rays"));
  const std::uint64_t strat_root = substream(cfg.seed ^ render.seed, "stratification");

  for (int step = 0; step < cfg.fit_steps; ++step) {
    instrument::Step scope;
    const auto idx = draw(ray_rng, cfg.batch_rays, population);
    const RayBatch batch = all.rays.subset(idx);
    const MatrixX<float> targets = gather(all.targets, idx);
    RenderConfig step_render = render;
    step_render.seed = substream(strat_root, std::uint64_t(step));
    grad.setZero(field.parameter_count());
    const float loss = nerf_loss<float>(field, batch, targets, step_render, cfg.norm, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "fit_field: non-finite loss or gradient at step " << step;
      throw NumericalError(msg.str());
    }
    const auto g = grad.segment(range.begin, range.size());
    m = beta1 * m + (1.0f - beta1) * g;
    v = beta2 * v + (1.0f - beta2) * g.cwiseAbs2();
    const float lr = float(cfg.lr * std::pow(cfg.lr_decay, double(step) / double(cfg.fit_steps)));
    const float c1 = 1.0f - std::pow(beta1, float(step + 1));
    const float c2 = 1.0f - std::pow(beta2, float(step + 1));
    field.parameters().segment(range.begin, range.size()).array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
  rep.steps = cfg.fit_steps;
  rep.final_eval_loss = eval_loss();
  if (report) *report = rep;
  return field;
}

ViewDataset realistic_dataset(const SceneDescription& scene, const std::vector<CameraModel>& cameras) {
  ViewDataset ds;
  ds.role = DatasetRole::realistic;
  for (const auto& cam : cameras) ds.entries.push_back({cam, trace_reference(scene, cam).image});
  return ds;
}

Field pretrain(const SceneDescription& scene, const std::vector<CameraModel>& cameras, const FieldArchitecture& arch,
               const TrainConfig& cfg, const RenderConfig& render, FitReport* report) {
  const ViewDataset ds = realistic_dataset(scene, cameras);
  Field field(arch, scene.bounds, cfg.seed);
  return fit_field(std::move(field), ds, cfg, render, report);
}

ImageBuffer blend_by_opacity(const ImageBuffer& stylized, const ImageBuffer& render, const ImageBuffer& opacity) {
  if (!stylized.same_shape(render) || opacity.channels() != 1 || opacity.height() != render.height() ||
      opacity.width() != render.width())
    throw std::invalid_argument("blend_by_opacity: shape mismatch");
  ImageBuffer out = render;
  out.pixels() += (stylized.pixels() - render.pixels()).cwiseProduct(opacity.pixels().replicate(1, render.channels()));
  return out;
}

SnerfResult snerf_train(const Field& field0, const std::vector<CameraModel>& cameras, const ImageBuffer& style,
                        const TrainConfig& cfg, const RenderConfig& render, const Stylizer& stylizer,
                        const FeatureExtractor<float>& extractor, const IterationCallback& on_iteration) {
  cfg.validate();
  const std::size_t k = cfg.K == 0 ? cameras.size() : std::size_t(cfg.K);
  if (cameras.empty() || k > cameras.size())
    throw std::invalid_argument("snerf_train: need at least K cameras");
  const std::vector<CameraModel> views(cameras.begin(), cameras.begin() + std::ptrdiff_t(k));
  RenderConfig view_render = render;
  view_render.stratified = false;

  SnerfResult result{field0, {}};
  std::vector<ImageBuffer> alphas(views.size());
  auto render_all = [&](const Field& f) {
    std::vector<ImageBuffer> imgs;
    for (std::size_t i = 0; i < views.size(); ++i)
      imgs.push_back(render_image(f, views[i], view_render, int(i), cfg.keep_background ? &alphas[i] : nullptr));
    return imgs;
  };

  const auto start = std::chrono::steady_clock::now();
  std::vector<ImageBuffer> renders = render_all(result.field);
  for (int t = 1; t <= cfg.T; ++t) {
    try {
      std::vector<ImageBuffer> stylized = stylize_views(stylizer, renders, style);
      if (cfg.keep_background)
        for (std::size_t i = 0; i < views.size(); ++i) stylized[i] = blend_by_opacity(stylized[i], renders[i], alphas[i]);

      ViewDataset ds;
      ds.role = DatasetRole::stylized;
      for (std::size_t i = 0; i < views.size(); ++i) ds.entries.push_back({views[i], stylized[i]});
      TrainConfig fit_cfg = cfg;
      fit_cfg.seed = substream(cfg.seed, std::uint64_t(t));
      FitReport rep;
      result.field = fit_field(std::move(result.field), ds, fit_cfg, render, &rep);

      std::vector<ImageBuffer> next = render_all(result.field);
      IterationDiagnostics d;
      d.iteration = t;
      for (std::size_t i = 0; i < views.size(); ++i) {
        d.mean_style_loss += style_loss(extractor, style, next[i]);
        d.mean_content_loss += content_loss(extractor, renders[i], next[i]);
      }
      d.mean_style_loss /= double(views.size());
      d.mean_content_loss /= double(views.size());
      d.eval_nerf_loss = rep.final_eval_loss;
      d.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.diagnostics.push_back(d);
      if (on_iteration) on_iteration(d, result.field);
      renders = std::move(next);
    } catch (const NumericalError& e) {
      throw NumericalError("snerf_train iteration " + std::to_string(t) + ": " + e.what());
    }
  }
  return result;
}

template <typename Scalar>
CombinedLoss<Scalar> combined_loss_reference(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                                             const Eigen::Ref<const MatrixX<Scalar>>& targets,
                                             const RenderConfig& render, const FeatureExtractor<Scalar>& extractor,
                                             const ImageT<Scalar>& content, const ImageT<Scalar>& style,
                                             const ImageT<Scalar>& candidate, Scalar w_content, Scalar w_style) {
  instrument::note_combined_reference_call();
  instrument::Step scope;
  CombinedLoss<Scalar> out;
  out.grad_params = VectorX<Scalar>::Zero(field.parameter_count());
  out.nerf = nerf_loss<Scalar>(field, rays, targets, render, LossNorm::squared, &out.grad_params);
  out.transfer = transfer_loss(extractor, content, style, candidate, w_content, w_style, &out.grad_candidate);
  out.total = out.nerf + out.transfer;
  return out;
}

#define SNERF_INSTANTIATE(S)                                                                                       \
  template S nerf_loss<S>(const RadianceField<S>&, const RayBatchT<S>&, const Eigen::Ref<const MatrixX<S>>&,      \
                          const RenderConfig&, LossNorm, VectorX<S>*);                                             \
  template CombinedLoss<S> combined_loss_reference<S>(const RadianceField<S>&, const RayBatchT<S>&,                \
                                                      const Eigen::Ref<const MatrixX<S>>&, const RenderConfig&,    \
                                                      const FeatureExtractor<S>&, const ImageT<S>&,                \
                                                      const ImageT<S>&, const ImageT<S>&, S, S);

SNERF_INSTANTIATE(float)
SNERF_INSTANTIATE(double)

#undef SNERF_INSTANTIATE

}  // namespace snerf
