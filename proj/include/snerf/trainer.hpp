#pragma once

#include "snerf/field.hpp"
#include "snerf/renderer.hpp"
#include "snerf/scene.hpp"
#include "snerf/styler.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace snerf {

/// Per-ray colour discrepancy used by the reconstruction loss.
enum class LossNorm { squared, l2 };

LossNorm parse_loss_norm(const std::string& s);
std::string to_string(LossNorm n);

struct TrainConfig {
  int T = 5;                ///< outer stylization iterations
  int K = 0;                ///< views rendered and stylized per iteration; 0 = all
  int fit_steps = 2000;     ///< field optimisation steps per fit
  int batch_rays = 512;     ///< M
  double lr = 5e-4;
  double lr_decay = 0.1;    ///< lr decays exponentially to lr * lr_decay by the last fit step
  bool freeze_geometry = false;
  /// Blend each stylized view back over its render by the rendered opacity, so
  /// empty space stays empty instead of being painted by the stylizer.
  bool keep_background = true;
  std::uint64_t seed = 0;
  LossNorm norm = LossNorm::squared;
  int eval_rays = 1024;     ///< size of the fixed held-out ray set

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

enum class DatasetRole { realistic, stylized };

struct ViewDataset {
  struct Entry {
    CameraModel camera;
    ImageBuffer target;
  };
  std::vector<Entry> entries;
  DatasetRole role = DatasetRole::realistic;

  void validate() const;
};

/// Mean over the batch of the per-ray discrepancy between rendered colours and
/// `targets` (3 x M). Accumulates d(loss)/d(params) into `grad` when non-null.
template <typename Scalar>
Scalar nerf_loss(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                 const Eigen::Ref<const MatrixX<Scalar>>& targets, const RenderConfig& render,
                 LossNorm norm = LossNorm::squared, VectorX<Scalar>* grad = nullptr);

struct FitReport {
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  int steps = 0;
};

/// Adam on random ray batches drawn uniformly over (view, pixel). With
/// cfg.freeze_geometry only the appearance partition is updated.
Field fit_field(Field field, const ViewDataset& dataset, const TrainConfig& cfg, const RenderConfig& render,
                FitReport* report = nullptr);

ViewDataset realistic_dataset(const SceneDescription& scene, const std::vector<CameraModel>& cameras);

/// Fresh field fitted to ground-truth renders of `scene` from `cameras`.
Field pretrain(const SceneDescription& scene, const std::vector<CameraModel>& cameras, const FieldArchitecture& arch,
               const TrainConfig& cfg, const RenderConfig& render, FitReport* report = nullptr);

struct IterationDiagnostics {
  int iteration = 0;
  double mean_style_loss = 0.0;    ///< style loss of the re-rendered training views
  double mean_content_loss = 0.0;  ///< content loss of the re-rendered views against the iteration's renders
  double eval_nerf_loss = 0.0;     ///< held-out ray loss against the stylized targets
  double wall_time = 0.0;          ///< seconds
};

using IterationCallback = std::function<void(const IterationDiagnostics&, const Field&)>;

struct SnerfResult {
  Field field;
  std::vector<IterationDiagnostics> diagnostics;
};

/// opacity * stylized + (1 - opacity) * render, per pixel; opacity has one channel.
ImageBuffer blend_by_opacity(const ImageBuffer& stylized, const ImageBuffer& render, const ImageBuffer& opacity);

/// Alternating stylization: T rounds of (render K views, stylize each view
/// independently, refit the field to the stylized views). With
/// cfg.keep_background the fit targets are opacity * stylized + (1 - opacity) * render.
SnerfResult snerf_train(const Field& field0, const std::vector<CameraModel>& cameras, const ImageBuffer& style,
                        const TrainConfig& cfg, const RenderConfig& render, const Stylizer& stylizer,
                        const FeatureExtractor<float>& extractor, const IterationCallback& on_iteration = {});

template <typename Scalar>
struct CombinedLoss {
  Scalar nerf = 0;
  Scalar transfer = 0;
  Scalar total = 0;
  VectorX<Scalar> grad_params;
  ImageT<Scalar> grad_candidate;
};

/// Reference evaluation of the coupled objective nerf_loss + transfer_loss with
/// both gradients in a single step. Not used by any training routine.
template <typename Scalar>
CombinedLoss<Scalar> combined_loss_reference(const RadianceField<Scalar>& field, const RayBatchT<Scalar>& rays,
                                             const Eigen::Ref<const MatrixX<Scalar>>& targets,
                                             const RenderConfig& render, const FeatureExtractor<Scalar>& extractor,
                                             const ImageT<Scalar>& content, const ImageT<Scalar>& style,
                                             const ImageT<Scalar>& candidate, Scalar w_content = 1,
                                             Scalar w_style = 1);

}  // namespace snerf
