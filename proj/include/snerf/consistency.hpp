#pragma once

#include "snerf/image.hpp"
#include "snerf/scene.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace snerf {

/// Backward bilinear warp: out(p) = image(p + flow(p)). Samples that fall
/// outside the image produce zeros.
ImageBuffer warp(const ImageBuffer& image, const FlowField& flow);

struct PairError {
  double error = 0.0;
  std::size_t n_valid = 0;
};

/// Masked mean of the per-pixel squared RGB difference (summed over channels,
/// divided by the number of masked pixels). Throws on an empty mask.
PairError consistency_error(const ImageBuffer& target, const ImageBuffer& warped, const Mask& mask);

struct PairRecord {
  int frame_i = 0;
  int frame_j = 0;
  double error = 0.0;
  std::size_t n_valid = 0;
};

struct ConsistencyReport {
  std::string sequence_id;
  std::string style_id;
  std::vector<PairRecord> pairs;
  std::map<int, double> offset_means;  ///< offset -> mean pair error
  double short_range_mean = 0.0;       ///< offset 1
  double long_range_mean = 0.0;        ///< offset 7
};

/// Flow keyed by (i, j). The flow for a pair lives on frame j's pixel grid and
/// points into frame i, which is what backward-warping frame i onto frame j needs;
/// its mask marks pixels of j visible in both frames.
using FlowMap = std::map<std::pair<int, int>, FlowField>;

inline const std::vector<int> kDefaultOffsets = {1, 7};

ConsistencyReport evaluate_sequence(const std::vector<ImageBuffer>& frames, const FlowMap& flows,
                                    const std::vector<int>& offsets = kDefaultOffsets);

/// Ground-truth flows for every (i, i + offset) pair of a camera path.
FlowMap analytic_flows(const SceneDescription& scene, const std::vector<CameraModel>& cameras,
                       const std::vector<int>& offsets = kDefaultOffsets);

}  // namespace snerf
