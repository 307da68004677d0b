#pragma once

#include "snerf/field.hpp"
#include "snerf/renderer.hpp"
#include "snerf/scene.hpp"
#include "snerf/styler.hpp"
#include "snerf/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace snerf {

inline constexpr int kConfigVersion = 1;

enum class Profile { desk, paper };

Profile parse_profile(const std::string& s);
std::string to_string(Profile p);

struct SceneSpec {
  std::string file;      ///< scene JSON to load; empty = generate from the root seed
  int n_primitives = 3;

  bool operator==(const SceneSpec&) const = default;
};

struct CameraSpec {
  int n_train = 20;
  int n_test = 8;
  PathKind test_path = PathKind::orbit;
  int width = 64;        ///< training views
  int height = 64;
  int eval_width = 128;  ///< test path renders, flows and consistency evaluation
  int eval_height = 128;
  double radius = 4.5;
  double elevation_deg = 25.0;
  double fov_deg = 40.0;

  PathOptions path_options() const;       ///< training resolution
  PathOptions eval_path_options() const;  ///< evaluation resolution
  bool operator==(const CameraSpec&) const = default;
};

struct StyleSpec {
  /// "pattern:<name>" for a built-in procedural image, otherwise a PNG path.
  std::string image = "pattern:stripes";
  int size = 64;  ///< edge length of procedural style images
  StyleConfig transfer;

  bool operator==(const StyleSpec&) const = default;
};

/// Optimisation budget of the realistic pretraining fit.
struct PretrainSpec {
  int fit_steps = 3000;
  int batch_rays = 256;
  double lr = 1e-2;
  double lr_decay = 0.1;

  bool operator==(const PretrainSpec&) const = default;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  Profile profile = Profile::desk;
  std::uint64_t seed = 0;  ///< root seed; modules derive named substreams from it
  std::string output_dir = "run";
  SceneSpec scene;
  CameraSpec cameras;
  FieldArchitecture field;
  RenderConfig render;
  StyleSpec style;
  PretrainSpec pretrain;
  TrainConfig train;

  /// Training config of the pretraining fit (realistic views).
  TrainConfig pretrain_config() const;
  /// Training config of the alternating stylization.
  TrainConfig stylize_config() const;
  RenderConfig render_config() const;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config(Profile profile = Profile::desk);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys take the defaults of the profile named in the document (desk if absent).
/// Unknown keys, wrong types and invalid values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& cfg);

/// Applies "a.b.c=value" overrides. The value is parsed as JSON when possible
/// and taken as a string otherwise; the path must name an existing key.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace snerf
