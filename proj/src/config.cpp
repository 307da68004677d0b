#include "snerf/config.hpp"

#include "snerf/errors.hpp"
#include "snerf/io.hpp"

#include <set>

namespace snerf {

using nlohmann::json;

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::desk;
  if (s == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + s + "' (expected desk or paper)");
}

std::string to_string(Profile p) { return p == Profile::paper ? "paper" : "desk"; }

PathOptions CameraSpec::path_options() const {
  PathOptions o;
  o.radius = radius;
  o.elevation_deg = elevation_deg;
  o.fov_deg = fov_deg;
  o.width = width;
  o.height = height;
  return o;
}

PathOptions CameraSpec::eval_path_options() const {
  PathOptions o = path_options();
  o.width = eval_width;
  o.height = eval_height;
  return o;
}

TrainConfig ExperimentConfig::pretrain_config() const {
  TrainConfig t = train;
  t.T = 1;
  t.fit_steps = pretrain.fit_steps;
  t.batch_rays = pretrain.batch_rays;
  t.lr = pretrain.lr;
  t.lr_decay = pretrain.lr_decay;
  t.freeze_geometry = false;
  t.seed = seed;
  return t;
}

TrainConfig ExperimentConfig::stylize_config() const {
  TrainConfig t = train;
  t.seed = substream(seed, "style");
  return t;
}

RenderConfig ExperimentConfig::render_config() const {
  RenderConfig r = render;
  r.seed = substream(seed, "stratification");
  return r;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(version == kConfigVersion, "unsupported config version " + std::to_string(version));
  require(!output_dir.empty(), "output_dir must not be empty");
  require(scene.n_primitives >= 1 && scene.n_primitives <= 16, "scene.n_primitives must be in [1, 16]");
  require(cameras.n_train >= 1, "cameras.n_train must be >= 1");
  require(cameras.n_test >= 2, "cameras.n_test must be >= 2");
  require(cameras.width >= 4 && cameras.height >= 4, "cameras.width/height must be >= 4");
  require(cameras.eval_width >= 4 && cameras.eval_height >= 4, "cameras.eval_width/eval_height must be >= 4");
  require(cameras.radius > 0.0, "cameras.radius must be positive");
  require(cameras.fov_deg > 0.0 && cameras.fov_deg < 180.0, "cameras.fov_deg must be in (0, 180)");
  require(field.pos_levels >= 1 && field.dir_levels >= 1 && field.trunk_depth >= 1 && field.trunk_width >= 1 &&
              field.rgb_width >= 1,
          "field sizes must be positive");
  require(style.size >= 4, "style.size must be >= 4");
  require(style.transfer.steps >= 0, "style.steps must be >= 0");
  require(style.transfer.step_size > 0.0, "style.step_size must be positive");
  require(style.transfer.w_content >= 0.0 && style.transfer.w_style >= 0.0, "style weights must be >= 0");
  require(pretrain.fit_steps >= 0 && pretrain.batch_rays >= 1 && pretrain.lr > 0.0, "invalid pretrain budget");
  require(pretrain.lr_decay > 0.0 && pretrain.lr_decay <= 1.0, "pretrain.lr_decay must be in (0, 1]");
  try {
    render.validate();
    train.validate();
    make_extractor<float>(style.transfer.extractor);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(train.K <= cameras.n_train, "train.K exceeds cameras.n_train");
}

ExperimentConfig default_config(Profile profile) {
  ExperimentConfig c;
  c.profile = profile;
  c.render.stratified = true;  // training fits only; evaluation renders always use midpoints
  if (profile == Profile::paper) {
    // Literal hyperparameters: unweighted losses, plain descent on pixels.
    c.style.transfer.steps = 500;
    c.style.transfer.step_size = 5e-4;
    c.pretrain = {50000, 4096, 5e-4, 1.0};
    c.train.T = 5;
    c.train.fit_steps = 50000;
    c.train.batch_rays = 4096;
    c.train.lr = 5e-4;
    c.train.lr_decay = 1.0;
    return c;
  }
  // Desk budget for one CPU core. The style settings come from a calibration run.
  c.render.n_samples = 32;
  c.style.transfer.optimizer = PixelOptimizer::adam;
  c.style.transfer.steps = 100;
  c.style.transfer.step_size = 0.02;
  c.style.transfer.w_style = 1e3;
  c.train.T = 5;
  c.train.fit_steps = 2000;
  c.train.batch_rays = 256;
  c.train.lr = 5e-4;
  return c;
}

namespace {

/// Reads keys from one JSON object and rejects any key it was never asked about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void get_bool(const char* key, bool& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + " must be true or false");
    out = j_.at(key).get<bool>();
  }

  template <typename T>
  void get_int(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    out = j_.at(key).get<T>();
  }

  void get_number(const char* key, double& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_number()) throw ConfigError(where(key) + " must be a number");
    out = j_.at(key).get<double>();
  }

  template <typename Fn>
  void get_enum(const char* key, Fn&& parse) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + " must be a string");
    try {
      parse(j_.at(key).get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + where(k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

json to_json(const ExperimentConfig& c) {
  return {
      {"version", c.version},
      {"profile", to_string(c.profile)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"scene", {{"file", c.scene.file}, {"n_primitives", c.scene.n_primitives}}},
      {"cameras",
       {{"n_train", c.cameras.n_train},
        {"n_test", c.cameras.n_test},
        {"test_path", to_string(c.cameras.test_path)},
        {"width", c.cameras.width},
        {"height", c.cameras.height},
        {"eval_width", c.cameras.eval_width},
        {"eval_height", c.cameras.eval_height},
        {"radius", c.cameras.radius},
        {"elevation_deg", c.cameras.elevation_deg},
        {"fov_deg", c.cameras.fov_deg}}},
      {"field",
       {{"pos_levels", c.field.pos_levels},
        {"dir_levels", c.field.dir_levels},
        {"trunk_depth", c.field.trunk_depth},
        {"trunk_width", c.field.trunk_width},
        {"rgb_width", c.field.rgb_width}}},
      {"render",
       {{"n_samples", c.render.n_samples},
        {"stratified", c.render.stratified},
        {"background", vec_json(c.render.background)},
        {"tile_size", c.render.tile_size}}},
      {"style",
       {{"image", c.style.image},
        {"size", c.style.size},
        {"extractor", c.style.transfer.extractor},
        {"w_content", c.style.transfer.w_content},
        {"w_style", c.style.transfer.w_style},
        {"steps", c.style.transfer.steps},
        {"step_size", c.style.transfer.step_size},
        {"optimizer", to_string(c.style.transfer.optimizer)},
        {"momentum", c.style.transfer.momentum}}},
      {"pretrain",
       {{"fit_steps", c.pretrain.fit_steps}, {"batch_rays", c.pretrain.batch_rays}, {"lr", c.pretrain.lr},
        {"lr_decay", c.pretrain.lr_decay}}},
      {"train",
       {{"T", c.train.T},
        {"K", c.train.K},
        {"fit_steps", c.train.fit_steps},
        {"batch_rays", c.train.batch_rays},
        {"lr", c.train.lr},
        {"lr_decay", c.train.lr_decay},
        {"freeze_geometry", c.train.freeze_geometry},
        {"keep_background", c.train.keep_background},
        {"norm", to_string(c.train.norm)},
        {"eval_rays", c.train.eval_rays}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Profile profile = Profile::desk;
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ConfigError("profile must be a string");
    profile = parse_profile(j["profile"].get<std::string>());
  }
  ExperimentConfig c = default_config(profile);

  StrictObject root(j, "");
  root.get_int("version", c.version);
  if (c.version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(c.version));
  root.get_enum("profile", [&](const std::string& s) { c.profile = parse_profile(s); });
  root.get_int("seed", c.seed);
  root.get("output_dir", c.output_dir);

  if (const json* s = root.child("scene")) {
    StrictObject o(*s, "scene");
    o.get("file", c.scene.file);
    o.get_int("n_primitives", c.scene.n_primitives);
    o.finish();
  }
  if (const json* s = root.child("cameras")) {
    StrictObject o(*s, "cameras");
    o.get_int("n_train", c.cameras.n_train);
    o.get_int("n_test", c.cameras.n_test);
    o.get_enum("test_path", [&](const std::string& v) { c.cameras.test_path = parse_path_kind(v); });
    o.get_int("width", c.cameras.width);
    o.get_int("height", c.cameras.height);
    o.get_int("eval_width", c.cameras.eval_width);
    o.get_int("eval_height", c.cameras.eval_height);
    o.get_number("radius", c.cameras.radius);
    o.get_number("elevation_deg", c.cameras.elevation_deg);
    o.get_number("fov_deg", c.cameras.fov_deg);
    o.finish();
  }
  if (const json* s = root.child("field")) {
    StrictObject o(*s, "field");
    o.get_int("pos_levels", c.field.pos_levels);
    o.get_int("dir_levels", c.field.dir_levels);
    o.get_int("trunk_depth", c.field.trunk_depth);
    o.get_int("trunk_width", c.field.trunk_width);
    o.get_int("rgb_width", c.field.rgb_width);
    o.finish();
  }
  if (const json* s = root.child("render")) {
    StrictObject o(*s, "render");
    o.get_int("n_samples", c.render.n_samples);
    o.get_bool("stratified", c.render.stratified);
    std::vector<double> bg;
    o.get("background", bg);
    if (!bg.empty()) {
      if (bg.size() != 3) throw ConfigError("render.background must have 3 components");
      c.render.background = Vector3d(bg[0], bg[1], bg[2]);
    }
    o.get_int("tile_size", c.render.tile_size);
    o.finish();
  }
  if (const json* s = root.child("style")) {
    StrictObject o(*s, "style");
    o.get("image", c.style.image);
    o.get_int("size", c.style.size);
    o.get("extractor", c.style.transfer.extractor);
    o.get_number("w_content", c.style.transfer.w_content);
    o.get_number("w_style", c.style.transfer.w_style);
    o.get_int("steps", c.style.transfer.steps);
    o.get_number("step_size", c.style.transfer.step_size);
    o.get_enum("optimizer", [&](const std::string& v) { c.style.transfer.optimizer = parse_pixel_optimizer(v); });
    o.get_number("momentum", c.style.transfer.momentum);
    o.finish();
  }
  if (const json* s = root.child("pretrain")) {
    StrictObject o(*s, "pretrain");
    o.get_int("fit_steps", c.pretrain.fit_steps);
    o.get_int("batch_rays", c.pretrain.batch_rays);
    o.get_number("lr", c.pretrain.lr);
    o.get_number("lr_decay", c.pretrain.lr_decay);
    o.finish();
  }
  if (const json* s = root.child("train")) {
    StrictObject o(*s, "train");
    o.get_int("T", c.train.T);
    o.get_int("K", c.train.K);
    o.get_int("fit_steps", c.train.fit_steps);
    o.get_int("batch_rays", c.train.batch_rays);
    o.get_number("lr", c.train.lr);
    o.get_number("lr_decay", c.train.lr_decay);
    o.get_bool("freeze_geometry", c.train.freeze_geometry);
    o.get_bool("keep_background", c.train.keep_background);
    o.get_enum("norm", [&](const std::string& v) { c.train.norm = parse_loss_norm(v); });
    o.get_int("eval_rays", c.train.eval_rays);
    o.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  io::write_text(path, to_json(cfg).dump(2) + "\n");
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  json j = to_json(cfg);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not of the form key=value");
    const std::string key = ov.substr(0, eq), text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
    // A string value that looks numeric ("1e-3") was parsed as a number; keep string keys as strings.
    if (node->is_string() && !value.is_string()) value = text;
    *node = value;
  }
  return config_from_json(j);
}

}  // namespace snerf
