#pragma once

#include "snerf/config.hpp"
#include "snerf/consistency.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace snerf {

/// Directory layout under ExperimentConfig::output_dir.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path scene() const { return root / "scene.json"; }
  std::filesystem::path train_cameras() const { return root / "cameras" / "train.json"; }
  std::filesystem::path test_cameras() const { return root / "cameras" / "test.json"; }
  std::filesystem::path ground_truth() const { return root / "gt"; }
  std::filesystem::path flow_dir() const { return root / "flow"; }
  std::filesystem::path synth_manifest() const { return root / "manifest.json"; }
  std::filesystem::path pretrain_dir() const { return root / "pretrain"; }
  std::filesystem::path pretrained() const { return pretrain_dir() / "field.ckpt"; }
  std::filesystem::path stylize_dir(const std::string& style_id) const { return root / "stylize" / style_id; }
  std::filesystem::path render_dir(const std::string& name) const { return root / "render" / name; }
  std::filesystem::path evaluate_dir(const std::string& name) const { return root / "evaluate" / name; }
};

RunLayout layout_for(const ExperimentConfig& cfg);

/// Short identifier of the configured style image ("stripes", file stem, ...).
std::string style_id(const ExperimentConfig& cfg);
ImageBuffer load_style_image(const ExperimentConfig& cfg);

struct SynthAssets {
  SceneDescription scene;
  std::vector<CameraModel> train;
  std::vector<CameraModel> test;
};

/// Scene, cameras, ground-truth views, analytic flows and a hashed manifest.
SynthAssets cmd_synth(const ExperimentConfig& cfg);
/// Reads what cmd_synth wrote; throws MissingAssetError when absent.
SynthAssets load_synth(const ExperimentConfig& cfg);

struct PretrainSummary {
  double train_psnr = 0.0;
  double heldout_psnr = 0.0;  ///< mean over the test path
  std::filesystem::path checkpoint;
};

PretrainSummary cmd_pretrain(const ExperimentConfig& cfg);

struct StylizeSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path diagnostics;
  std::vector<IterationDiagnostics> iterations;
};

/// Alternating stylization from `checkpoint` (the pretrained field when empty).
StylizeSummary cmd_stylize(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint = {});

struct RenderSummary {
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> frames;  ///< raw float frames
};

/// Renders `checkpoint` along the test path (or `camera_file` when given) into render/<name>.
RenderSummary cmd_render(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::string& name, const std::filesystem::path& camera_file = {});

/// Per-frame independent stylization of the ground-truth test frames, written like cmd_render.
RenderSummary cmd_render_per_frame(const ExperimentConfig& cfg, const std::string& name);

/// Frames listed in a render manifest (raw or PNG).
std::vector<ImageBuffer> load_frames(const std::filesystem::path& manifest);
/// Flows for every (i, i + offset) pair stored in `dir`.
FlowMap load_flows(const std::filesystem::path& dir, int n_frames, const std::vector<int>& offsets = kDefaultOffsets);

nlohmann::json to_json(const ConsistencyReport& report);

/// Consistency of a frame sequence; writes evaluate/<method>/report.{json,csv}.
ConsistencyReport cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& frames_manifest,
                               const std::filesystem::path& flow_dir, const std::string& method);

/// Collects every evaluate/*/report.json into report.json and report.csv at the run root.
nlohmann::json cmd_report(const ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader = "method,scene,offset,mean_error";

}  // namespace snerf
