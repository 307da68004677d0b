#pragma once

#include "snerf/field.hpp"
#include "snerf/image.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace snerf {

/// Row-major so each channel plane is contiguous.
template <typename Scalar>
using PlanarX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Channel-planar feature map: data is C x (H * W).
template <typename Scalar>
struct FeatureMap {
  int height = 0;
  int width = 0;
  PlanarX<Scalar> data;
  Index channels() const { return data.rows(); }
};

enum class ExtractorProvenance { filter_bank, external_pretrained };

/// One fixed (never trained) stage: optional 2x2 average pool, then a kxk
/// zero-padded convolution, then optional ReLU.
template <typename Scalar>
struct ExtractorStage {
  std::string name;
  bool pool_before = false;
  int kernel = 3;          ///< 1 or 3
  MatrixX<Scalar> weights;  ///< C_out x (C_in * kernel * kernel), input-channel major
  VectorX<Scalar> bias;
  bool relu = true;
};

template <typename Scalar>
struct ExtractorCache {
  std::vector<FeatureMap<Scalar>> inputs;  ///< stage input after pooling
  std::vector<PlanarX<Scalar>> pre;        ///< pre-activation, C_out x HW
  std::vector<FeatureMap<Scalar>> outputs;
  int image_height = 0;
  int image_width = 0;
};

/// Gram matrices and raw content features of an image, keyed by layer name.
template <typename Scalar>
struct StyleStats {
  std::map<std::string, MatrixX<Scalar>> grams;
  std::map<std::string, FeatureMap<Scalar>> content_features;
};

/// Deterministic feature network standing in for a pretrained CNN.
template <typename Scalar>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(std::vector<ExtractorStage<Scalar>> stages, std::vector<std::string> content_layers,
                   std::vector<std::string> style_layers, ExtractorProvenance provenance);

  const std::vector<ExtractorStage<Scalar>>& stages() const { return stages_; }
  const std::vector<std::string>& content_layers() const { return content_layers_; }
  const std::vector<std::string>& style_layers() const { return style_layers_; }
  ExtractorProvenance provenance() const { return provenance_; }
  int min_size() const;
  int stage_index(const std::string& name) const;

  /// Runs every stage; throws std::invalid_argument for images below min_size().
  std::vector<FeatureMap<Scalar>> forward(const ImageT<Scalar>& image, ExtractorCache<Scalar>* cache = nullptr) const;

  /// d(loss)/d(image) from per-stage d(loss)/d(features); empty entries mean zero.
  ImageT<Scalar> backward(const ExtractorCache<Scalar>& cache, const std::vector<PlanarX<Scalar>>& grad_features) const;

  template <typename Other>
  FeatureExtractor<Other> cast() const {
    std::vector<ExtractorStage<Other>> st;
    for (const auto& s : stages_)
      st.push_back({s.name, s.pool_before, s.kernel, s.weights.template cast<Other>(), s.bias.template cast<Other>(),
                    s.relu});
    return FeatureExtractor<Other>(std::move(st), content_layers_, style_layers_, provenance_);
  }

 private:
  std::vector<ExtractorStage<Scalar>> stages_;
  std::vector<std::string> content_layers_;
  std::vector<std::string> style_layers_;
  ExtractorProvenance provenance_ = ExtractorProvenance::filter_bank;
};

/// Default three-stage bank: colour identity, oriented luminance edges, a
/// Laplacian blob and colour-opponent filters in stage 1, then two pooled stages
/// of fixed seeded 3x3 filters. Content uses the deepest stage, style all three.
template <typename Scalar>
FeatureExtractor<Scalar> make_filter_bank();

/// Looks up a registered extractor by name ("filter-bank").
template <typename Scalar>
FeatureExtractor<Scalar> make_extractor(const std::string& name);

std::vector<std::string> registered_extractors();

/// Gram matrix F F^T / (C * H * W).
template <typename Scalar>
MatrixX<Scalar> gram(const FeatureMap<Scalar>& f);

template <typename Scalar>
StyleStats<Scalar> extract(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& image);

/// w_content * content term + w_style * style term against fixed targets, with
/// the pixel gradient of the candidate on request.
template <typename Scalar>
class TransferObjective {
 public:
  TransferObjective(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>* content,
                    const ImageT<Scalar>* style, Scalar w_content, Scalar w_style);

  struct Value {
    Scalar content = 0;
    Scalar style = 0;
    Scalar total = 0;
  };

  Value evaluate(const ImageT<Scalar>& candidate, ImageT<Scalar>* grad = nullptr) const;

 private:
  const FeatureExtractor<Scalar>& extractor_;
  StyleStats<Scalar> content_stats_;
  StyleStats<Scalar> style_stats_;
  bool has_content_ = false;
  bool has_style_ = false;
  Scalar w_content_;
  Scalar w_style_;
  int content_h_ = 0, content_w_ = 0;
};

template <typename Scalar>
Scalar content_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                    const ImageT<Scalar>& candidate, ImageT<Scalar>* grad = nullptr);

template <typename Scalar>
Scalar style_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& style,
                  const ImageT<Scalar>& candidate, ImageT<Scalar>* grad = nullptr);

template <typename Scalar>
Scalar transfer_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                     const ImageT<Scalar>& style, const ImageT<Scalar>& candidate, Scalar w_content, Scalar w_style,
                     ImageT<Scalar>* grad = nullptr);

enum class PixelOptimizer { sgd, momentum, adam };

PixelOptimizer parse_pixel_optimizer(const std::string& s);
std::string to_string(PixelOptimizer o);

struct StyleConfig {
  std::string extractor = "filter-bank";
  double w_content = 1.0;
  double w_style = 1.0;
  int steps = 500;
  double step_size = 5e-4;
  PixelOptimizer optimizer = PixelOptimizer::sgd;
  double momentum = 0.9;

  bool operator==(const StyleConfig&) const = default;
};

/// Gradient descent on the transfer loss starting from `content`, clamped to
/// [0, 1] after every step. Returns the final iterate unless it is worse than the
/// starting point, in which case the best iterate seen is returned.
template <typename Scalar>
ImageT<Scalar> stylize_image(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                             const ImageT<Scalar>& style, const StyleConfig& cfg);

/// Image-to-image stylization strategy used by the alternating trainer.
class Stylizer {
 public:
  virtual ~Stylizer() = default;
  virtual ImageBuffer stylize(const ImageBuffer& content, const ImageBuffer& style) const = 0;
};

class OptimizationStylizer final : public Stylizer {
 public:
  OptimizationStylizer(FeatureExtractor<float> extractor, StyleConfig cfg)
      : extractor_(std::move(extractor)), cfg_(std::move(cfg)) {}
  ImageBuffer stylize(const ImageBuffer& content, const ImageBuffer& style) const override {
    return stylize_image(extractor_, content, style, cfg_);
  }
  const StyleConfig& config() const { return cfg_; }

 private:
  FeatureExtractor<float> extractor_;
  StyleConfig cfg_;
};

/// Wraps a feed-forward image -> image model.
class FeedForwardStylizer final : public Stylizer {
 public:
  explicit FeedForwardStylizer(std::function<ImageBuffer(const ImageBuffer&, const ImageBuffer&)> fn)
      : fn_(std::move(fn)) {}
  ImageBuffer stylize(const ImageBuffer& content, const ImageBuffer& style) const override {
    return fn_(content, style);
  }

 private:
  std::function<ImageBuffer(const ImageBuffer&, const ImageBuffer&)> fn_;
};

/// Stylizes each view independently; output order follows input order.
std::vector<ImageBuffer> stylize_views(const Stylizer& stylizer, const std::vector<ImageBuffer>& images,
                                       const ImageBuffer& style);

std::vector<ImageBuffer> stylize_views(const FeatureExtractor<float>& extractor,
                                       const std::vector<ImageBuffer>& images, const ImageBuffer& style,
                                       const StyleConfig& cfg);

}  // namespace snerf
