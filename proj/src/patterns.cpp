#include "snerf/patterns.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace snerf {

namespace {

void put(ImageBuffer& img, int r, int c, const Eigen::Vector3f& rgb) {
  for (int ch = 0; ch < 3; ++ch) img(r, c, ch) = rgb[ch];
}

}  // namespace

std::vector<std::string> style_pattern_names() { return {"stripes", "dots", "checker", "waves"}; }

ImageBuffer make_style_image(const std::string& name, int size) {
  if (size < 1) throw std::invalid_argument("make_style_image: size must be positive");
  ImageBuffer img(size, size, 3);
  const float pi = std::numbers::pi_v<float>;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      Eigen::Vector3f rgb;
      if (name == "stripes") {
        const bool band = ((r + c) / 4) % 2 == 0;
        rgb = band ? Eigen::Vector3f(0.95f, 0.75f, 0.1f) : Eigen::Vector3f(0.1f, 0.15f, 0.55f);
      } else if (name == "dots") {
        const float dx = float(c % 8) - 3.5f, dy = float(r % 8) - 3.5f;
        rgb = dx * dx + dy * dy < 6.0f ? Eigen::Vector3f(0.9f, 0.1f, 0.3f) : Eigen::Vector3f(0.2f, 0.8f, 0.7f);
      } else if (name == "checker") {
        const bool cell = ((r / 6) + (c / 6)) % 2 == 0;
        rgb = cell ? Eigen::Vector3f(0.05f, 0.05f, 0.05f) : Eigen::Vector3f(0.9f, 0.9f, 0.8f);
      } else if (name == "waves") {
        const float phase = 2.0f * pi * (float(c) / 10.0f + 0.3f * std::sin(2.0f * pi * float(r) / 16.0f));
        const float s = 0.5f + 0.5f * std::sin(phase);
        rgb = Eigen::Vector3f(0.1f + 0.8f * s, 0.3f, 0.9f - 0.8f * s);
      } else {
        throw std::invalid_argument("unknown style pattern '" + name + "'");
      }
      put(img, r, c, rgb);
    }
  }
  return img;
}

}  // namespace snerf
