#include "snerf/styler.hpp"

#include "snerf/instrument.hpp"
#include "snerf/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace snerf {

namespace {

template <typename Scalar>
FeatureMap<Scalar> to_planar(const ImageT<Scalar>& img) {
  return {img.height(), img.width(), img.pixels().transpose()};
}

template <typename Scalar>
FeatureMap<Scalar> pool2(const FeatureMap<Scalar>& in) {
  const int h = in.height / 2, w = in.width / 2;
  FeatureMap<Scalar> out{h, w, PlanarX<Scalar>(in.channels(), Index(h) * w)};
  for (Index ch = 0; ch < in.channels(); ++ch) {
    const Scalar* src = in.data.row(ch).data();
    Scalar* dst = out.data.row(ch).data();
    for (int r = 0; r < h; ++r) {
      const Scalar* a = src + Index(2 * r) * in.width;
      const Scalar* b = a + in.width;
      for (int c = 0; c < w; ++c)
        dst[Index(r) * w + c] = Scalar(0.25) * (a[2 * c] + a[2 * c + 1] + b[2 * c] + b[2 * c + 1]);
    }
  }
  return out;
}

template <typename Scalar>
PlanarX<Scalar> pool2_backward(const PlanarX<Scalar>& grad_out, int in_h, int in_w) {
  const int h = in_h / 2, w = in_w / 2;
  PlanarX<Scalar> g = PlanarX<Scalar>::Zero(grad_out.rows(), Index(in_h) * in_w);
  for (Index ch = 0; ch < g.rows(); ++ch) {
    const Scalar* src = grad_out.row(ch).data();
    Scalar* dst = g.row(ch).data();
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const Scalar v = Scalar(0.25) * src[Index(r) * w + c];
        Scalar* a = dst + Index(2 * r) * in_w + 2 * c;
        a[0] += v;
        a[1] += v;
        a[in_w] += v;
        a[in_w + 1] += v;
      }
  }
  return g;
}

// 3x3 zero-padded patch matrix: row (ci * 9 + (dy + 1) * 3 + dx + 1), column = pixel.
template <typename Scalar>
PlanarX<Scalar> im2col3(const FeatureMap<Scalar>& in) {
  const int h = in.height, w = in.width;
  PlanarX<Scalar> cols = PlanarX<Scalar>::Zero(in.channels() * 9, Index(h) * w);
  for (Index ci = 0; ci < in.channels(); ++ci) {
    const Scalar* src = in.data.row(ci).data();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        Scalar* dst = cols.row(ci * 9 + (dy + 1) * 3 + (dx + 1)).data();
        for (int r = std::max(0, -dy); r < std::min(h, h - dy); ++r) {
          const int c0 = std::max(0, -dx), c1 = std::min(w, w - dx);
          const Scalar* s = src + Index(r + dy) * w + dx;
          Scalar* d = dst + Index(r) * w;
          for (int c = c0; c < c1; ++c) d[c] = s[c];
        }
      }
  }
  return cols;
}

template <typename Scalar>
PlanarX<Scalar> col2im3(const PlanarX<Scalar>& cols, Index channels, int h, int w) {
  PlanarX<Scalar> g = PlanarX<Scalar>::Zero(channels, Index(h) * w);
  for (Index ci = 0; ci < channels; ++ci) {
    Scalar* dst = g.row(ci).data();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const Scalar* src = cols.row(ci * 9 + (dy + 1) * 3 + (dx + 1)).data();
        for (int r = std::max(0, -dy); r < std::min(h, h - dy); ++r) {
          const int c0 = std::max(0, -dx), c1 = std::min(w, w - dx);
          Scalar* d = dst + Index(r + dy) * w + dx;
          const Scalar* s = src + Index(r) * w;
          for (int c = c0; c < c1; ++c) d[c] += s[c];
        }
      }
  }
  return g;
}

double gaussian(Rng& rng) {
  const double u1 = std::max(uniform(rng), 1e-300);
  const double u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

template <typename Scalar>
FeatureExtractor<Scalar>::FeatureExtractor(std::vector<ExtractorStage<Scalar>> stages,
                                           std::vector<std::string> content_layers,
                                           std::vector<std::string> style_layers, ExtractorProvenance provenance)
    : stages_(std::move(stages)),
      content_layers_(std::move(content_layers)),
      style_layers_(std::move(style_layers)),
      provenance_(provenance) {
  if (stages_.empty()) throw std::invalid_argument("FeatureExtractor: no stages");
  Index in_channels = 3;
  for (const auto& s : stages_) {
    if (s.kernel != 1 && s.kernel != 3) throw std::invalid_argument("FeatureExtractor: kernel must be 1 or 3");
    if (s.weights.cols() != in_channels * s.kernel * s.kernel || s.bias.size() != s.weights.rows())
      throw std::invalid_argument("FeatureExtractor: stage '" + s.name + "' has inconsistent weight shape");
    in_channels = s.weights.rows();
  }
  for (const auto* names : {&content_layers_, &style_layers_})
    for (const auto& n : *names)
      if (stage_index(n) < 0) throw std::invalid_argument("FeatureExtractor: unknown layer '" + n + "'");
}

template <typename Scalar>
int FeatureExtractor<Scalar>::stage_index(const std::string& name) const {
  for (std::size_t i = 0; i < stages_.size(); ++i)
    if (stages_[i].name == name) return static_cast<int>(i);
  return -1;
}

template <typename Scalar>
int FeatureExtractor<Scalar>::min_size() const {
  int size = 1;
  for (const auto& s : stages_)
    if (s.pool_before) size *= 2;
  return size;
}

template <typename Scalar>
std::vector<FeatureMap<Scalar>> FeatureExtractor<Scalar>::forward(const ImageT<Scalar>& image,
                                                                  ExtractorCache<Scalar>* cache) const {
  if (image.height() < min_size() || image.width() < min_size())
    throw std::invalid_argument("FeatureExtractor: image smaller than the minimum receptive size " +
                                std::to_string(min_size()));
  if (image.channels() != 3) throw std::invalid_argument("FeatureExtractor: expected an RGB image");
  instrument::note_extractor_forward();
  std::vector<FeatureMap<Scalar>> outputs;
  outputs.reserve(stages_.size());
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->image_height = image.height();
    cache->image_width = image.width();
  }
  FeatureMap<Scalar> x = to_planar(image);
  for (const auto& s : stages_) {
    if (s.pool_before) x = pool2(x);
    FeatureMap<Scalar> y{x.height, x.width, {}};
    if (s.kernel == 3)
      y.data.noalias() = s.weights * im2col3(x);
    else
      y.data.noalias() = s.weights * x.data;
    y.data.colwise() += s.bias;
    if (cache) {
      cache->inputs.push_back(x);
      cache->pre.push_back(y.data);
    }
    if (s.relu) y.data = y.data.cwiseMax(Scalar(0));
    outputs.push_back(y);
    x = std::move(y);
  }
  if (cache) cache->outputs = outputs;
  return outputs;
}

template <typename Scalar>
ImageT<Scalar> FeatureExtractor<Scalar>::backward(const ExtractorCache<Scalar>& cache,
                                                  const std::vector<PlanarX<Scalar>>& grad_features) const {
  instrument::GradientPath path(instrument::Subsystem::extractor);
  PlanarX<Scalar> g;  // gradient w.r.t. the output of the current stage
  for (std::size_t i = stages_.size(); i-- > 0;) {
    const auto& s = stages_[i];
    const auto& in = cache.inputs[i];
    if (i < grad_features.size() && grad_features[i].size() > 0) {
      if (g.size() == 0)
        g = grad_features[i];
      else
        g += grad_features[i];
    }
    if (g.size() == 0) {
      g = PlanarX<Scalar>::Zero(s.weights.rows(), Index(in.height) * in.width);
    }
    if (s.relu) g = (cache.pre[i].array() > Scalar(0)).select(g, Scalar(0));
    PlanarX<Scalar> gin;
    if (s.kernel == 3) {
      const PlanarX<Scalar> gcols = s.weights.transpose() * g;
      gin = col2im3(gcols, in.channels(), in.height, in.width);
    } else {
      gin = s.weights.transpose() * g;
    }
    if (s.pool_before) {
      const int ph = i == 0 ? cache.image_height : cache.outputs[i - 1].height;
      const int pw = i == 0 ? cache.image_width : cache.outputs[i - 1].width;
      gin = pool2_backward(gin, ph, pw);
    }
    g = std::move(gin);
  }
  ImageT<Scalar> out(cache.image_height, cache.image_width, 3);
  out.pixels() = g.transpose();
  return out;
}

template <typename Scalar>
FeatureExtractor<Scalar> make_filter_bank() {
  using M = MatrixX<double>;
  // Stage 1: 3 -> 17 channels on the full-resolution image.
  const double sobel_x[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const double sobel_y[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const double diag_a[9] = {0, 1, 2, -1, 0, 1, -2, -1, 0};
  const double diag_b[9] = {-2, -1, 0, -1, 0, 1, 0, 1, 2};
  const double lap[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  std::vector<std::array<double, 27>> rows;
  auto add_luma = [&rows](const double* k, double scale, double sign) {
    std::array<double, 27> w{};
    for (int ch = 0; ch < 3; ++ch)
      for (int t = 0; t < 9; ++t) w[std::size_t(ch * 9 + t)] = sign * scale * k[t] / 3.0;
    rows.push_back(w);
  };
  for (int ch = 0; ch < 3; ++ch) {
    std::array<double, 27> w{};
    w[std::size_t(ch * 9 + 4)] = 1.0;
    rows.push_back(w);
  }
  for (const double* k : {sobel_x, sobel_y, diag_a, diag_b})
    for (double sign : {1.0, -1.0}) add_luma(k, 0.25, sign);
  for (double sign : {1.0, -1.0}) add_luma(lap, 0.25, sign);
  const double opp[2][3] = {{1.0, -1.0, 0.0}, {0.5, 0.5, -1.0}};
  for (const auto& o : opp)
    for (double sign : {1.0, -1.0}) {
      std::array<double, 27> w{};
      for (int ch = 0; ch < 3; ++ch) w[std::size_t(ch * 9 + 4)] = sign * o[ch];
      rows.push_back(w);
    }
  M w1(Index(rows.size()), 27);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int k = 0; k < 27; ++k) w1(Index(r), k) = rows[r][std::size_t(k)];

  // Stages 2 and 3: fixed seeded He-scaled 3x3 filters after 2x2 pooling.
  Rng rng(0x5eedf11e7ba4cULL);
  auto random_stage = [&rng](Index out, Index in) {
    M w(out, in * 9);
    const double scale = std::sqrt(2.0 / double(in * 9));
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = scale * gaussian(rng);
    return w;
  };
  const M w2 = random_stage(16, w1.rows());
  const M w3 = random_stage(16, 16);

  std::vector<ExtractorStage<Scalar>> stages;
  stages.push_back({"stage1", false, 3, w1.cast<Scalar>(), VectorX<Scalar>::Zero(w1.rows()), true});
  stages.push_back({"stage2", true, 3, w2.cast<Scalar>(), VectorX<Scalar>::Zero(w2.rows()), true});
  stages.push_back({"stage3", true, 3, w3.cast<Scalar>(), VectorX<Scalar>::Zero(w3.rows()), true});
  return FeatureExtractor<Scalar>(std::move(stages), {"stage3"}, {"stage1", "stage2", "stage3"},
                                  ExtractorProvenance::filter_bank);
}

template <typename Scalar>
FeatureExtractor<Scalar> make_extractor(const std::string& name) {
  if (name == "filter-bank") return make_filter_bank<Scalar>();
  throw std::invalid_argument("unknown feature extractor '" + name + "'");
}

std::vector<std::string> registered_extractors() { return {"filter-bank"}; }

template <typename Scalar>
MatrixX<Scalar> gram(const FeatureMap<Scalar>& f) {
  const Scalar norm = Scalar(f.data.rows() * f.data.cols());
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(f.data.rows(), f.data.rows());
  if (norm == Scalar(0)) return g;
  g.template selfadjointView<Eigen::Lower>().rankUpdate(f.data);
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g / norm;
}

template <typename Scalar>
StyleStats<Scalar> extract(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& image) {
  const auto feats = extractor.forward(image);
  StyleStats<Scalar> stats;
  for (const auto& n : extractor.style_layers()) stats.grams[n] = gram(feats[std::size_t(extractor.stage_index(n))]);
  for (const auto& n : extractor.content_layers())
    stats.content_features[n] = feats[std::size_t(extractor.stage_index(n))];
  return stats;
}

template <typename Scalar>
TransferObjective<Scalar>::TransferObjective(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>* content,
                                             const ImageT<Scalar>* style, Scalar w_content, Scalar w_style)
    : extractor_(extractor), w_content_(w_content), w_style_(w_style) {
  if (w_content < Scalar(0) || w_style < Scalar(0)) throw std::invalid_argument("transfer loss weights must be >= 0");
  if (content) {
    content_stats_ = extract(extractor, *content);
    has_content_ = true;
    content_h_ = content->height();
    content_w_ = content->width();
  }
  if (style) {
    style_stats_ = extract(extractor, *style);
    has_style_ = true;
  }
}

template <typename Scalar>
typename TransferObjective<Scalar>::Value TransferObjective<Scalar>::evaluate(const ImageT<Scalar>& candidate,
                                                                              ImageT<Scalar>* grad) const {
  if (has_content_ && (candidate.height() != content_h_ || candidate.width() != content_w_))
    throw std::invalid_argument("content loss: candidate and content dimensions differ");
  ExtractorCache<Scalar> cache;
  const auto feats = extractor_.forward(candidate, grad ? &cache : nullptr);
  std::vector<PlanarX<Scalar>> gfeat(feats.size());
  Value v;
  if (has_content_) {
    for (const auto& n : extractor_.content_layers()) {
      const auto i = std::size_t(extractor_.stage_index(n));
      const PlanarX<Scalar> diff = feats[i].data - content_stats_.content_features.at(n).data;
      const Scalar count = Scalar(diff.size());
      v.content += diff.squaredNorm() / count;
      if (grad && w_content_ != Scalar(0)) {
        const PlanarX<Scalar> g = (Scalar(2) * w_content_ / count) * diff;
        if (gfeat[i].size() == 0)
          gfeat[i] = g;
        else
          gfeat[i] += g;
      }
    }
  }
  if (has_style_) {
    for (const auto& n : extractor_.style_layers()) {
      const auto i = std::size_t(extractor_.stage_index(n));
      const MatrixX<Scalar> diff = gram(feats[i]) - style_stats_.grams.at(n);
      const Scalar c2 = Scalar(diff.size());
      v.style += diff.squaredNorm() / c2;
      if (grad && w_style_ != Scalar(0)) {
        // d/dF of mean((F F^T / n - G)^2) = 4 (G_F - G) F / (C^2 n)
        const Scalar n_el = Scalar(feats[i].data.rows() * feats[i].data.cols());
        const PlanarX<Scalar> g = (Scalar(4) * w_style_ / (c2 * n_el)) * (diff * feats[i].data);
        if (gfeat[i].size() == 0)
          gfeat[i] = g;
        else
          gfeat[i] += g;
      }
    }
  }
  v.total = w_content_ * v.content + w_style_ * v.style;
  if (grad) *grad = extractor_.backward(cache, gfeat);
  return v;
}

template <typename Scalar>
Scalar content_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                    const ImageT<Scalar>& candidate, ImageT<Scalar>* grad) {
  return TransferObjective<Scalar>(extractor, &content, nullptr, Scalar(1), Scalar(0)).evaluate(candidate, grad).total;
}

template <typename Scalar>
Scalar style_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& style,
                  const ImageT<Scalar>& candidate, ImageT<Scalar>* grad) {
  return TransferObjective<Scalar>(extractor, nullptr, &style, Scalar(0), Scalar(1)).evaluate(candidate, grad).total;
}

template <typename Scalar>
Scalar transfer_loss(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                     const ImageT<Scalar>& style, const ImageT<Scalar>& candidate, Scalar w_content, Scalar w_style,
                     ImageT<Scalar>* grad) {
  return TransferObjective<Scalar>(extractor, &content, &style, w_content, w_style).evaluate(candidate, grad).total;
}

PixelOptimizer parse_pixel_optimizer(const std::string& s) {
  if (s == "sgd") return PixelOptimizer::sgd;
  if (s == "momentum") return PixelOptimizer::momentum;
  if (s == "adam") return PixelOptimizer::adam;
  throw std::invalid_argument("unknown pixel optimizer '" + s + "'");
}

std::string to_string(PixelOptimizer o) {
  switch (o) {
    case PixelOptimizer::sgd:
      return "sgd";
    case PixelOptimizer::momentum:
      return "momentum";
    case PixelOptimizer::adam:
      return "adam";
  }
  return "sgd";
}

template <typename Scalar>
ImageT<Scalar> stylize_image(const FeatureExtractor<Scalar>& extractor, const ImageT<Scalar>& content,
                             const ImageT<Scalar>& style, const StyleConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("stylize_image: steps must be >= 0");
  if (cfg.steps == 0) return content;
  const TransferObjective<Scalar> objective(extractor, &content, &style, Scalar(cfg.w_content), Scalar(cfg.w_style));
  using Pixels = typename ImageT<Scalar>::Pixels;
  ImageT<Scalar> x = content;
  ImageT<Scalar> best = content;
  ImageT<Scalar> grad;
  Pixels m = Pixels::Zero(x.pixels().rows(), x.pixels().cols());
  Pixels v = m;
  const Scalar lr = Scalar(cfg.step_size);
  const Scalar beta1(0.9), beta2(0.999), eps(1e-8);
  Scalar initial(0), best_loss(INFINITY);
  for (int step = 0; step < cfg.steps; ++step) {
    instrument::Step scope;
    const Scalar loss = objective.evaluate(x, &grad).total;
    if (step == 0) initial = loss;
    if (loss < best_loss) {
      best_loss = loss;
      best = x;
    }
    auto& p = x.pixels();
    const auto& g = grad.pixels();
    switch (cfg.optimizer) {
      case PixelOptimizer::sgd:
        p -= lr * g;
        break;
      case PixelOptimizer::momentum:
        m = Scalar(cfg.momentum) * m + g;
        p -= lr * m;
        break;
      case PixelOptimizer::adam: {
        m = beta1 * m + (Scalar(1) - beta1) * g;
        v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();
        const Scalar c1 = Scalar(1) - std::pow(beta1, Scalar(step + 1));
        const Scalar c2 = Scalar(1) - std::pow(beta2, Scalar(step + 1));
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        break;
      }
    }
    p = p.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }
  const Scalar final_loss = objective.evaluate(x).total;
  if (final_loss <= initial) return x;
  return final_loss < best_loss ? x : best;
}

std::vector<ImageBuffer> stylize_views(const Stylizer& stylizer, const std::vector<ImageBuffer>& images,
                                       const ImageBuffer& style) {
  std::vector<ImageBuffer> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(stylizer.stylize(img, style));
  return out;
}

std::vector<ImageBuffer> stylize_views(const FeatureExtractor<float>& extractor,
                                       const std::vector<ImageBuffer>& images, const ImageBuffer& style,
                                       const StyleConfig& cfg) {
  return stylize_views(OptimizationStylizer(extractor, cfg), images, style);
}

#define SNERF_INSTANTIATE(S)                                                                                      \
  template class FeatureExtractor<S>;                                                                             \
  template class TransferObjective<S>;                                                                            \
  template FeatureExtractor<S> make_filter_bank<S>();                                                             \
  template FeatureExtractor<S> make_extractor<S>(const std::string&);                                             \
  template MatrixX<S> gram<S>(const FeatureMap<S>&);                                                              \
  template StyleStats<S> extract<S>(const FeatureExtractor<S>&, const ImageT<S>&);                                \
  template S content_loss<S>(const FeatureExtractor<S>&, const ImageT<S>&, const ImageT<S>&, ImageT<S>*);         \
  template S style_loss<S>(const FeatureExtractor<S>&, const ImageT<S>&, const ImageT<S>&, ImageT<S>*);           \
  template S transfer_loss<S>(const FeatureExtractor<S>&, const ImageT<S>&, const ImageT<S>&, const ImageT<S>&, S, \
                              S, ImageT<S>*);                                                                     \
  template ImageT<S> stylize_image<S>(const FeatureExtractor<S>&, const ImageT<S>&, const ImageT<S>&,             \
                                      const StyleConfig&);

SNERF_INSTANTIATE(float)
SNERF_INSTANTIATE(double)

#undef SNERF_INSTANTIATE

}  // namespace snerf
