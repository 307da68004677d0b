#include "snerf/field.hpp"

#include <stdexcept>

namespace snerf {

namespace {

template <typename Scalar>
Scalar softplus(Scalar s) {
  return s > Scalar(20) ? s : std::log1p(std::exp(s));
}

template <typename Scalar>
Scalar sigmoid(Scalar s) {
  return Scalar(1) / (Scalar(1) + std::exp(-s));
}

}  // namespace

template <typename Scalar>
Index RadianceField<Scalar>::layout(const FieldArchitecture& arch) {
  if (arch.pos_levels < 0 || arch.dir_levels < 0 || arch.trunk_depth < 1 || arch.trunk_width < 1 ||
      arch.rgb_width < 1)
    throw std::invalid_argument("RadianceField: invalid architecture");
  arch_ = arch;
  trunk_.clear();
  Index offset = 0;
  auto add = [&offset](Index rows, Index cols) {
    LayerSpec l{offset, offset + rows * cols, rows, cols};
    offset += rows * cols + rows;
    return l;
  };
  Index in = pos_encoding_size();
  for (int i = 0; i < arch.trunk_depth; ++i) {
    trunk_.push_back(add(arch.trunk_width, in));
    in = arch.trunk_width;
  }
  density_ = add(1, arch.trunk_width);
  geometry_end_ = offset;
  rgb_hidden_ = add(arch.rgb_width, arch.trunk_width + dir_encoding_size());
  rgb_out_ = add(3, arch.rgb_width);
  return offset;
}

template <typename Scalar>
RadianceField<Scalar>::RadianceField(const FieldArchitecture& arch, const Bounds& bounds, std::uint64_t seed)
    : bounds_(bounds) {
  params_ = VectorX<Scalar>::Zero(layout(arch));
  Rng rng(substream(seed, "init"));
  auto fill = [&](const LayerSpec& l, double gain) {
    const double bound = std::sqrt(gain / double(l.cols));
    for (Index k = 0; k < l.rows * l.cols; ++k)
      params_[l.weight_offset + k] = static_cast<Scalar>(uniform(rng, -bound, bound));
  };
  for (const auto& l : trunk_) fill(l, 6.0);
  fill(density_, 1.0);
  fill(rgb_hidden_, 6.0);
  fill(rgb_out_, 1.0);
}

template <typename Scalar>
void RadianceField<Scalar>::assign(const FieldArchitecture& arch, const Bounds& bounds, VectorX<Scalar> params) {
  const Index n = layout(arch);
  if (params.size() != n) throw std::invalid_argument("RadianceField: parameter count does not match architecture");
  bounds_ = bounds;
  params_ = std::move(params);
}

template <typename Scalar>
void RadianceField<Scalar>::forward(const Eigen::Ref<const MatrixX<Scalar>>& positions,
                                    const Eigen::Ref<const MatrixX<Scalar>>& directions,
                                    FieldCache<Scalar>& cache) const {
  const Vec3<Scalar> center = bounds_.center().template cast<Scalar>();
  const Vec3<Scalar> inv_half = bounds_.half_extent().cwiseInverse().template cast<Scalar>();
  cache.pos_norm = (positions.colwise() - center).array().colwise() * inv_half.array();
  cache.pos_enc = positional_encode<Scalar>(cache.pos_norm, arch_.pos_levels);
  cache.dir_enc = positional_encode<Scalar>(directions, arch_.dir_levels);

  cache.trunk.resize(trunk_.size());
  const MatrixX<Scalar>* h = &cache.pos_enc;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    auto& out = cache.trunk[i];
    out.noalias() = weight(trunk_[i]) * *h;
    out.colwise() += bias(trunk_[i]);
    out = out.cwiseMax(Scalar(0));
    h = &out;
  }
  const MatrixX<Scalar>& feat = cache.trunk.back();

  cache.density_pre.noalias() = weight(density_) * feat;
  cache.density_pre.array() += params_[density_.bias_offset];
  cache.sigma = cache.density_pre.unaryExpr([](Scalar s) { return softplus(s); });

  const auto wh = weight(rgb_hidden_);
  const Index tw = feat.rows();
  cache.rgb_hidden.noalias() = wh.leftCols(tw) * feat;
  if (cache.dir_enc.rows() > 0) cache.rgb_hidden.noalias() += wh.rightCols(cache.dir_enc.rows()) * cache.dir_enc;
  cache.rgb_hidden.colwise() += bias(rgb_hidden_);
  cache.rgb_hidden = cache.rgb_hidden.cwiseMax(Scalar(0));

  cache.rgb.noalias() = weight(rgb_out_) * cache.rgb_hidden;
  cache.rgb.colwise() += bias(rgb_out_);
  cache.rgb = cache.rgb.unaryExpr([](Scalar s) { return sigmoid(s); });
}

template <typename Scalar>
void RadianceField<Scalar>::backward(const FieldCache<Scalar>& cache,
                                     const Eigen::Ref<const MatrixX<Scalar>>& grad_rgb,
                                     const Eigen::Ref<const RowVectorX<Scalar>>& grad_sigma, VectorX<Scalar>& grad,
                                     FieldInputGrad<Scalar>* input_grad) const {
  if (grad.size() != params_.size()) grad = VectorX<Scalar>::Zero(params_.size());
  auto gw = [&grad](const LayerSpec& l) {
    return Eigen::Map<MatrixX<Scalar>>(grad.data() + l.weight_offset, l.rows, l.cols);
  };
  auto gb = [&grad](const LayerSpec& l) { return Eigen::Map<VectorX<Scalar>>(grad.data() + l.bias_offset, l.rows); };

  const MatrixX<Scalar>& feat = cache.trunk.back();
  const Index tw = feat.rows();

  // rgb output: sigmoid
  const MatrixX<Scalar> dz_out = grad_rgb.cwiseProduct((cache.rgb.array() * (Scalar(1) - cache.rgb.array())).matrix());
  gw(rgb_out_).noalias() += dz_out * cache.rgb_hidden.transpose();
  gb(rgb_out_) += dz_out.rowwise().sum();

  MatrixX<Scalar> dz_hidden = weight(rgb_out_).transpose() * dz_out;
  dz_hidden = (cache.rgb_hidden.array() > Scalar(0)).select(dz_hidden, Scalar(0));
  auto gwh = gw(rgb_hidden_);
  gwh.leftCols(tw).noalias() += dz_hidden * feat.transpose();
  if (cache.dir_enc.rows() > 0) gwh.rightCols(cache.dir_enc.rows()).noalias() += dz_hidden * cache.dir_enc.transpose();
  gb(rgb_hidden_) += dz_hidden.rowwise().sum();

  const auto wh = weight(rgb_hidden_);
  MatrixX<Scalar> dh = wh.leftCols(tw).transpose() * dz_hidden;

  // density: softplus' = sigmoid
  const RowVectorX<Scalar> ds =
      grad_sigma.cwiseProduct(cache.density_pre.unaryExpr([](Scalar s) { return sigmoid(s); }));
  gw(density_).noalias() += ds * feat.transpose();
  grad[density_.bias_offset] += ds.sum();
  dh.noalias() += weight(density_).transpose() * ds;

  for (std::size_t i = trunk_.size(); i-- > 0;) {
    const MatrixX<Scalar>& out = cache.trunk[i];
    const MatrixX<Scalar>& in = i == 0 ? cache.pos_enc : cache.trunk[i - 1];
    dh = (out.array() > Scalar(0)).select(dh, Scalar(0));
    gw(trunk_[i]).noalias() += dh * in.transpose();
    gb(trunk_[i]) += dh.rowwise().sum();
    if (i > 0 || input_grad) dh = weight(trunk_[i]).transpose() * dh;
  }

  if (input_grad) {
    const Vec3<Scalar> inv_half = bounds_.half_extent().cwiseInverse().template cast<Scalar>();
    input_grad->positions = positional_encode_backward<Scalar>(cache.pos_enc, dh, 3, arch_.pos_levels);
    input_grad->positions.array().colwise() *= inv_half.array();
    const MatrixX<Scalar> ddir_enc = wh.rightCols(cache.dir_enc.rows()).transpose() * dz_hidden;
    input_grad->directions = positional_encode_backward<Scalar>(cache.dir_enc, ddir_enc, 3, arch_.dir_levels);
  }
}

template <typename Scalar>
typename RadianceField<Scalar>::Sample RadianceField<Scalar>::eval(const Vec3<Scalar>& x, const Vec3<Scalar>& d) const {
  FieldCache<Scalar> cache;
  forward(MatrixX<Scalar>(x), MatrixX<Scalar>(d), cache);
  return {cache.rgb.col(0), cache.sigma[0]};
}

template class RadianceField<float>;
template class RadianceField<double>;

}  // namespace snerf
