#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace snerf {

using Index = Eigen::Index;

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

using Vector3d = Eigen::Vector3d;
using Matrix3d = Eigen::Matrix3d;

/// Dense H x W x C image stored interleaved and row-major, pixel p = row * W + col.
/// The same layout is used for the raw float sidecar files.
template <typename Scalar>
class ImageT {
 public:
  using Pixels = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ImageT() = default;
  ImageT(int height, int width, int channels = 3, Scalar fill = Scalar(0))
      : height_(height), width_(width), pixels_(Pixels::Constant(Index(height) * width, channels, fill)) {
    if (height < 0 || width < 0 || channels < 1) throw std::invalid_argument("ImageT: bad dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return static_cast<int>(pixels_.cols()); }
  Index size() const { return pixels_.rows(); }
  bool empty() const { return pixels_.size() == 0; }

  Scalar& operator()(int row, int col, int ch = 0) { return pixels_(Index(row) * width_ + col, ch); }
  Scalar operator()(int row, int col, int ch = 0) const { return pixels_(Index(row) * width_ + col, ch); }

  auto pixel(int row, int col) { return pixels_.row(Index(row) * width_ + col); }
  auto pixel(int row, int col) const { return pixels_.row(Index(row) * width_ + col); }

  Pixels& pixels() { return pixels_; }
  const Pixels& pixels() const { return pixels_; }

  bool same_shape(const ImageT& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels() == other.channels();
  }

  template <typename Other>
  ImageT<Other> cast() const {
    ImageT<Other> out(height_, width_, channels());
    out.pixels() = pixels_.template cast<Other>();
    return out;
  }

  bool operator==(const ImageT& other) const { return same_shape(other) && pixels_ == other.pixels_; }

 private:
  int height_ = 0;
  int width_ = 0;
  Pixels pixels_;
};

using ImageBuffer = ImageT<float>;

/// Boolean H x W mask; true marks a pixel that takes part in a comparison.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int h, int w, bool fill) : height(h), width(w), values(std::size_t(h) * w, fill ? 1 : 0) {}

  bool operator()(int row, int col) const { return values[std::size_t(row) * width + col] != 0; }
  void set(int row, int col, bool v) { values[std::size_t(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }
  bool operator==(const Mask&) const = default;
};

template <typename Scalar>
double mse(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  return (a.pixels().template cast<double>() - b.pixels().template cast<double>()).array().square().mean();
}

/// Peak signal-to-noise ratio for images in [0, 1].
template <typename Scalar>
double psnr(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  const double e = mse(a, b);
  return e <= 0.0 ? INFINITY : -10.0 * std::log10(e);
}

}  // namespace snerf
