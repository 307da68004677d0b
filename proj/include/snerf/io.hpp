#pragma once

#include "snerf/camera.hpp"
#include "snerf/field.hpp"
#include "snerf/image.hpp"
#include "snerf/scene.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace snerf::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Raw float sidecar: "SNRF" magic, then uint32 H, W, C (little-endian), then
// H * W * C float32 little-endian values, row-major with channels interleaved.
inline constexpr char kRawMagic[4] = {'S', 'N', 'R', 'F'};

void write_raw(const fs::path& path, const ImageT<float>& img);
ImageT<float> read_raw(const fs::path& path);

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const fs::path& path, const ImageBuffer& img);
/// Loads any PNG as RGB floats in [0, 1]; alpha is dropped, grey is replicated.
ImageBuffer read_png(const fs::path& path);

void write_mask(const fs::path& path, const Mask& mask);
Mask read_mask(const fs::path& path);

/// flow_<i>_<j>.raw and mask_<i>_<j>.raw inside `dir`.
void write_flow(const fs::path& dir, int i, int j, const FlowField& flow);
FlowField read_flow(const fs::path& dir, int i, int j);

json to_json(const CameraModel& cam);
CameraModel camera_from_json(const json& j);

inline constexpr int kSceneVersion = 1;
json to_json(const SceneDescription& scene);
SceneDescription scene_from_json(const json& j);
void write_scene(const fs::path& path, const SceneDescription& scene);
SceneDescription read_scene(const fs::path& path);

void write_cameras(const fs::path& path, const std::vector<CameraModel>& cams);
std::vector<CameraModel> read_cameras(const fs::path& path);

// Checkpoint: "SNCK" magic, uint32 version, architecture (5 x int32), bounds
// (6 x float64), uint64 parameter count, float32 parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const fs::path& path, const Field& field);
Field read_checkpoint(const fs::path& path);
/// Also rejects checkpoints whose architecture differs from `expected`.
Field read_checkpoint(const fs::path& path, const FieldArchitecture& expected);

std::string sha256_file(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
json read_json(const fs::path& path);

/// {"version": 1, "files": [{"path": path relative to root, "sha256": hex}, ...]}.
/// `files` are ordinary paths (not relative to root).
json file_manifest(const fs::path& root, const std::vector<fs::path>& files);

}  // namespace snerf::io
