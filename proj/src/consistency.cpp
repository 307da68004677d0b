#include "snerf/consistency.hpp"

#include <cmath>
#include <stdexcept>

namespace snerf {

ImageBuffer warp(const ImageBuffer& image, const FlowField& flow) {
  if (flow.flow.height() != image.height() || flow.flow.width() != image.width() || flow.flow.channels() != 2)
    throw std::invalid_argument("warp: flow and image dimensions differ");
  const int h = image.height(), w = image.width(), nc = image.channels();
  ImageBuffer out(h, w, nc);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const float x = float(c) + flow.flow(r, c, 0);
      const float y = float(r) + flow.flow(r, c, 1);
      if (!(x >= 0.0f && x <= float(w - 1) && y >= 0.0f && y <= float(h - 1))) continue;
      const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float fx = x - float(x0), fy = y - float(y0);
      for (int ch = 0; ch < nc; ++ch) {
        const float top = image(y0, x0, ch) * (1.0f - fx) + image(y0, x1, ch) * fx;
        const float bot = image(y1, x0, ch) * (1.0f - fx) + image(y1, x1, ch) * fx;
        out(r, c, ch) = top * (1.0f - fy) + bot * fy;
      }
    }
  }
  return out;
}

PairError consistency_error(const ImageBuffer& target, const ImageBuffer& warped, const Mask& mask) {
  if (!target.same_shape(warped) || mask.height != target.height() || mask.width != target.width())
    throw std::invalid_argument("consistency_error: dimension mismatch");
  PairError out;
  double sum = 0.0;
  for (int r = 0; r < target.height(); ++r)
    for (int c = 0; c < target.width(); ++c) {
      if (!mask(r, c)) continue;
      ++out.n_valid;
      for (int ch = 0; ch < target.channels(); ++ch) {
        const double d = double(target(r, c, ch)) - double(warped(r, c, ch));
        sum += d * d;
      }
    }
  if (out.n_valid == 0) throw std::invalid_argument("consistency_error: empty mask, metric undefined");
  out.error = sum / double(out.n_valid);
  return out;
}

ConsistencyReport evaluate_sequence(const std::vector<ImageBuffer>& frames, const FlowMap& flows,
                                    const std::vector<int>& offsets) {
  ConsistencyReport report;
  const int n = static_cast<int>(frames.size());
  for (int delta : offsets) {
    if (delta < 1) throw std::invalid_argument("evaluate_sequence: offsets must be >= 1");
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i + delta < n; ++i) {
      const int j = i + delta;
      const auto it = flows.find({i, j});
      if (it == flows.end())
        throw std::out_of_range("evaluate_sequence: missing flow for pair (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
      const ImageBuffer warped = warp(frames[std::size_t(i)], it->second);
      const PairError e = consistency_error(frames[std::size_t(j)], warped, it->second.visible);
      report.pairs.push_back({i, j, e.error, e.n_valid});
      sum += e.error;
      ++count;
    }
    if (count > 0) report.offset_means[delta] = sum / count;
  }
  if (auto it = report.offset_means.find(1); it != report.offset_means.end()) report.short_range_mean = it->second;
  if (auto it = report.offset_means.find(7); it != report.offset_means.end()) report.long_range_mean = it->second;
  return report;
}

FlowMap analytic_flows(const SceneDescription& scene, const std::vector<CameraModel>& cameras,
                       const std::vector<int>& offsets) {
  FlowMap flows;
  const int n = static_cast<int>(cameras.size());
  for (int delta : offsets)
    for (int i = 0; i + delta < n; ++i)
      flows[{i, i + delta}] = analytic_flow(scene, cameras[std::size_t(i + delta)], cameras[std::size_t(i)]);
  return flows;
}

}  // namespace snerf
