#pragma once

#include "snerf/image.hpp"
#include "snerf/rng.hpp"
#include "snerf/scene.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace snerf {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Sinusoidal encoding of each column of `p` (k x N). Output row (i * levels + l) * 2
/// holds sin(2^l pi p_i) and the following row cos(2^l pi p_i).
template <typename Scalar>
MatrixX<Scalar> positional_encode(const Eigen::Ref<const MatrixX<Scalar>>& p, int levels) {
  MatrixX<Scalar> out(p.rows() * 2 * levels, p.cols());
  for (Index i = 0; i < p.rows(); ++i) {
    for (int l = 0; l < levels; ++l) {
      const Scalar freq = std::ldexp(Scalar(std::numbers::pi), l);
      const auto arg = (freq * p.row(i).array()).eval();
      out.row((i * levels + l) * 2) = arg.sin().matrix();
      out.row((i * levels + l) * 2 + 1) = arg.cos().matrix();
    }
  }
  return out;
}

/// Chain rule through positional_encode: dL/dp from dL/d(encoding).
/// Only the encoding itself is needed: d sin/dp = f cos and d cos/dp = -f sin.
template <typename Scalar>
MatrixX<Scalar> positional_encode_backward(const Eigen::Ref<const MatrixX<Scalar>>& encoded,
                                           const Eigen::Ref<const MatrixX<Scalar>>& grad_encoded, Index dims,
                                           int levels) {
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(dims, encoded.cols());
  for (Index i = 0; i < dims; ++i) {
    for (int l = 0; l < levels; ++l) {
      const Scalar freq = std::ldexp(Scalar(std::numbers::pi), l);
      const Index s = (i * levels + l) * 2;
      g.row(i).array() += freq * (grad_encoded.row(s).array() * encoded.row(s + 1).array() -
                                  grad_encoded.row(s + 1).array() * encoded.row(s).array());
    }
  }
  return g;
}

struct FieldArchitecture {
  int pos_levels = 6;
  int dir_levels = 2;
  int trunk_depth = 4;
  int trunk_width = 64;
  int rgb_width = 32;

  bool operator==(const FieldArchitecture&) const = default;
};

/// Dense affine layer view into the flat parameter vector: y = W x + b, W is rows x cols.
struct LayerSpec {
  Index weight_offset = 0;
  Index bias_offset = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Contiguous slice [begin, end) of the flat parameter vector.
struct ParamRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

/// Activations kept by forward() for a subsequent backward().
template <typename Scalar>
struct FieldCache {
  MatrixX<Scalar> pos_norm;                  // 3 x N
  MatrixX<Scalar> pos_enc;                   // Ex x N
  MatrixX<Scalar> dir_enc;                   // Ed x N
  std::vector<MatrixX<Scalar>> trunk;        // post-ReLU activations, one per trunk layer
  RowVectorX<Scalar> density_pre;            // 1 x N
  MatrixX<Scalar> rgb_hidden;                // post-ReLU, R x N
  MatrixX<Scalar> rgb;                       // 3 x N, in [0,1]
  RowVectorX<Scalar> sigma;                  // 1 x N, >= 0
};

template <typename Scalar>
struct FieldInputGrad {
  MatrixX<Scalar> positions;   // 3 x N
  MatrixX<Scalar> directions;  // 3 x N
};

/// Radiance field F: (x, d) -> (c, sigma) as a small MLP.
///
/// Parameters live in one flat vector laid out as [trunk layers, density head,
/// rgb hidden layer, rgb output layer]. The first two groups form the geometry
/// partition and the rgb branch forms the appearance partition, so both are
/// contiguous ranges. Density never sees the view direction.
template <typename Scalar>
class RadianceField {
 public:
  RadianceField() = default;
  RadianceField(const FieldArchitecture& arch, const Bounds& bounds, std::uint64_t seed);

  const FieldArchitecture& architecture() const { return arch_; }
  const Bounds& bounds() const { return bounds_; }

  VectorX<Scalar>& parameters() { return params_; }
  const VectorX<Scalar>& parameters() const { return params_; }
  Index parameter_count() const { return params_.size(); }

  ParamRange geometry_range() const { return {0, geometry_end_}; }
  ParamRange appearance_range() const { return {geometry_end_, params_.size()}; }

  const std::vector<LayerSpec>& trunk_layers() const { return trunk_; }
  const LayerSpec& density_layer() const { return density_; }
  const LayerSpec& rgb_hidden_layer() const { return rgb_hidden_; }
  const LayerSpec& rgb_output_layer() const { return rgb_out_; }

  Index pos_encoding_size() const { return 3 * 2 * arch_.pos_levels; }
  Index dir_encoding_size() const { return 3 * 2 * arch_.dir_levels; }

  /// Batched evaluation; positions and directions are 3 x N.
  void forward(const Eigen::Ref<const MatrixX<Scalar>>& positions, const Eigen::Ref<const MatrixX<Scalar>>& directions,
               FieldCache<Scalar>& cache) const;

  /// Accumulates parameter gradients into `grad` (resized and zeroed if empty).
  /// When `input_grad` is non-null, also returns dL/dx and dL/dd.
  void backward(const FieldCache<Scalar>& cache, const Eigen::Ref<const MatrixX<Scalar>>& grad_rgb,
                const Eigen::Ref<const RowVectorX<Scalar>>& grad_sigma, VectorX<Scalar>& grad,
                FieldInputGrad<Scalar>* input_grad = nullptr) const;

  struct Sample {
    Vec3<Scalar> rgb;
    Scalar sigma;
  };
  Sample eval(const Vec3<Scalar>& x, const Vec3<Scalar>& d) const;

  template <typename Other>
  RadianceField<Other> cast() const {
    RadianceField<Other> out;
    out.assign(arch_, bounds_, params_.template cast<Other>());
    return out;
  }

  /// Rebuilds the layer table for `arch` and adopts `params`; throws if the size disagrees.
  void assign(const FieldArchitecture& arch, const Bounds& bounds, VectorX<Scalar> params);

  bool operator==(const RadianceField& o) const {
    return arch_ == o.arch_ && bounds_ == o.bounds_ && params_ == o.params_;
  }

 private:
  Index layout(const FieldArchitecture& arch);

  auto weight(const LayerSpec& l) const {
    return Eigen::Map<const MatrixX<Scalar>>(params_.data() + l.weight_offset, l.rows, l.cols);
  }
  auto bias(const LayerSpec& l) const {
    return Eigen::Map<const VectorX<Scalar>>(params_.data() + l.bias_offset, l.rows);
  }

  FieldArchitecture arch_;
  Bounds bounds_;
  std::vector<LayerSpec> trunk_;
  LayerSpec density_;
  LayerSpec rgb_hidden_;
  LayerSpec rgb_out_;
  Index geometry_end_ = 0;
  VectorX<Scalar> params_;
};

struct ParameterPartition {
  ParamRange geometry;    ///< trunk and density head
  ParamRange appearance;  ///< rgb branch
};

template <typename Scalar>
ParameterPartition partition_parameters(const RadianceField<Scalar>& field) {
  return {field.geometry_range(), field.appearance_range()};
}

extern template class RadianceField<float>;
extern template class RadianceField<double>;

using Field = RadianceField<float>;

}  // namespace snerf
