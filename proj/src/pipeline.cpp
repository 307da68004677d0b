#include "snerf/pipeline.hpp"

#include "snerf/errors.hpp"
#include "snerf/io.hpp"
#include "snerf/patterns.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace snerf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string indexed(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02d%s", prefix, i, ext);
  return buf;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingAssetError(std::string(what) + " not found: " + p.string() + "");
}

std::string scene_name(const ExperimentConfig& cfg) {
  if (!cfg.scene.file.empty()) return fs::path(cfg.scene.file).stem().string();
  return "synthetic-" + std::to_string(cfg.seed);
}

std::string stylize_name(const ExperimentConfig& cfg) {
  return style_id(cfg) + (cfg.train.freeze_geometry ? "-frozen" : "");
}

std::vector<fs::path> write_views(const fs::path& dir, const char* prefix, const SceneDescription& scene,
                                  const std::vector<CameraModel>& cams) {
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const GroundTruthView v = trace_reference(scene, cams[i]);
    const int k = int(i);
    files.push_back(dir / indexed(prefix, k, ".raw"));
    io::write_raw(files.back(), v.image);
    files.push_back(dir / indexed(prefix, k, ".png"));
    io::write_png(files.back(), v.image);
    files.push_back(dir / indexed("depth", k, ".raw"));
    io::write_raw(files.back(), v.depth);
  }
  return files;
}

double mean_psnr(const Field& field, const std::vector<CameraModel>& cams, const SceneDescription& scene,
                 const RenderConfig& render) {
  double sum = 0.0;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const ImageBuffer img = render_image(field, cams[i], render, int(i));
    sum += psnr(img, trace_reference(scene, cams[i]).image);
  }
  return sum / double(cams.size());
}

RenderSummary write_frames(const fs::path& dir, const std::vector<ImageBuffer>& frames, const json& meta) {
  RenderSummary out;
  std::vector<fs::path> files;
  json list = json::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const fs::path raw = dir / indexed("frame", int(i), ".raw");
    const fs::path png = dir / indexed("frame", int(i), ".png");
    io::write_raw(raw, frames[i]);
    io::write_png(png, frames[i]);
    out.frames.push_back(raw);
    files.push_back(raw);
    files.push_back(png);
    list.push_back(raw.filename().string());
  }
  json manifest = io::file_manifest(dir, files);
  manifest["frames"] = list;
  manifest["meta"] = meta;
  out.manifest = dir / "manifest.json";
  io::write_text(out.manifest, manifest.dump(2) + "\n");
  return out;
}

}  // namespace

RunLayout layout_for(const ExperimentConfig& cfg) { return {fs::path(cfg.output_dir)}; }

std::string style_id(const ExperimentConfig& cfg) {
  const std::string& s = cfg.style.image;
  if (s.rfind("pattern:", 0) == 0) return s.substr(8);
  return fs::path(s).stem().string();
}

ImageBuffer load_style_image(const ExperimentConfig& cfg) {
  const std::string& s = cfg.style.image;
  if (s.rfind("pattern:", 0) == 0) {
    try {
      return make_style_image(s.substr(8), cfg.style.size);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  require_file(s, "style image");
  return io::read_png(s);
}

SynthAssets cmd_synth(const ExperimentConfig& cfg) {
  cfg.validate();
  const RunLayout L = layout_for(cfg);
  SynthAssets a;
  a.scene = cfg.scene.file.empty() ? build_scene(cfg.seed, cfg.scene.n_primitives) : io::read_scene(cfg.scene.file);
  a.train = hemisphere_cameras(cfg.cameras.n_train, a.scene, cfg.cameras.path_options());
  a.test = camera_path(cfg.cameras.test_path, cfg.cameras.n_test, a.scene, cfg.cameras.eval_path_options());

  std::vector<fs::path> files = {L.scene(), L.train_cameras(), L.test_cameras()};
  io::write_scene(L.scene(), a.scene);
  io::write_cameras(L.train_cameras(), a.train);
  io::write_cameras(L.test_cameras(), a.test);
  for (const auto& f : write_views(L.ground_truth() / "train", "view", a.scene, a.train)) files.push_back(f);
  for (const auto& f : write_views(L.ground_truth() / "test", "frame", a.scene, a.test)) files.push_back(f);
  const FlowMap flows = analytic_flows(a.scene, a.test);
  for (const auto& [key, flow] : flows) {
    io::write_flow(L.flow_dir(), key.first, key.second, flow);
    const std::string suffix = "_" + std::to_string(key.first) + "_" + std::to_string(key.second) + ".raw";
    files.push_back(L.flow_dir() / ("flow" + suffix));
    files.push_back(L.flow_dir() / ("mask" + suffix));
  }
  io::write_text(L.synth_manifest(), io::file_manifest(L.root, files).dump(2) + "\n");
  return a;
}

SynthAssets load_synth(const ExperimentConfig& cfg) {
  const RunLayout L = layout_for(cfg);
  for (const auto& p : {L.scene(), L.train_cameras(), L.test_cameras()}) require_file(p, "synth asset");
  return {io::read_scene(L.scene()), io::read_cameras(L.train_cameras()), io::read_cameras(L.test_cameras())};
}

PretrainSummary cmd_pretrain(const ExperimentConfig& cfg) {
  cfg.validate();
  const RunLayout L = layout_for(cfg);
  const SynthAssets a = load_synth(cfg);
  const RenderConfig render = cfg.render_config();
  FitReport rep;
  const Field field = pretrain(a.scene, a.train, cfg.field, cfg.pretrain_config(), render, &rep);

  RenderConfig eval_render = render;
  eval_render.stratified = false;
  PretrainSummary s;
  s.checkpoint = L.pretrained();
  io::write_checkpoint(s.checkpoint, field);
  s.train_psnr = mean_psnr(field, a.train, a.scene, eval_render);
  // Held-out poses are scored at the training resolution.
  std::vector<CameraModel> heldout;
  for (const auto& cam : a.test) heldout.push_back(with_resolution(cam, cfg.cameras.width, cfg.cameras.height));
  s.heldout_psnr = mean_psnr(field, heldout, a.scene, eval_render);
  const json report = {{"train_psnr", s.train_psnr},
                       {"heldout_psnr", s.heldout_psnr},
                       {"initial_eval_loss", rep.initial_eval_loss},
                       {"final_eval_loss", rep.final_eval_loss},
                       {"steps", rep.steps}};
  io::write_text(L.pretrain_dir() / "report.json", report.dump(2) + "\n");
  return s;
}

StylizeSummary cmd_stylize(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  cfg.validate();
  const RunLayout L = layout_for(cfg);
  const SynthAssets a = load_synth(cfg);
  const fs::path ckpt = checkpoint.empty() ? L.pretrained() : checkpoint;
  require_file(ckpt, "checkpoint");
  const Field field0 = io::read_checkpoint(ckpt, cfg.field);

  const ImageBuffer style = load_style_image(cfg);
  const FeatureExtractor<float> extractor = make_extractor<float>(cfg.style.transfer.extractor);
  const OptimizationStylizer stylizer(extractor, cfg.style.transfer);
  const RenderConfig render = cfg.render_config();
  RenderConfig preview_render = render;
  preview_render.stratified = false;

  const fs::path dir = L.stylize_dir(stylize_name(cfg));
  fs::create_directories(dir / "previews");
  StylizeSummary s;
  s.diagnostics = dir / "diagnostics.jsonl";
  std::ofstream diag(s.diagnostics, std::ios::trunc);
  if (!diag) throw std::runtime_error("cannot write " + s.diagnostics.string());

  auto on_iteration = [&](const IterationDiagnostics& d, const Field& f) {
    const fs::path ck = dir / indexed("iter", d.iteration, ".ckpt");
    io::write_checkpoint(ck, f);
    s.checkpoints.push_back(ck);
    io::write_png(dir / "previews" / indexed("iter", d.iteration, ".png"),
                  render_image(f, a.test.front(), preview_render));
    const json rec = {{"iteration", d.iteration},
                      {"mean_style_loss", d.mean_style_loss},
                      {"mean_content_loss", d.mean_content_loss},
                      {"eval_nerf_loss", d.eval_nerf_loss},
                      {"meta",
                       {{"style", style_id(cfg)},
                        {"freeze_geometry", cfg.train.freeze_geometry},
                        {"T", cfg.train.T},
                        {"wall_time_s", d.wall_time}}}};
    diag << rec.dump() << "\n" << std::flush;
    s.iterations.push_back(d);
  };
  snerf_train(field0, a.train, style, cfg.stylize_config(), render, stylizer, extractor, on_iteration);
  return s;
}

RenderSummary cmd_render(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::string& name,
                         const fs::path& camera_file) {
  cfg.validate();
  require_file(checkpoint, "checkpoint");
  Field field;
  try {
    field = io::read_checkpoint(checkpoint, cfg.field);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  std::vector<CameraModel> cams;
  if (camera_file.empty()) {
    cams = load_synth(cfg).test;
  } else {
    require_file(camera_file, "camera path");
    cams = io::read_cameras(camera_file);
  }
  RenderConfig render = cfg.render_config();
  render.stratified = false;
  std::vector<ImageBuffer> frames;
  for (std::size_t i = 0; i < cams.size(); ++i) frames.push_back(render_image(field, cams[i], render, int(i)));
  return write_frames(layout_for(cfg).render_dir(name), frames,
                      {{"method", "snerf"}, {"checkpoint", checkpoint.filename().string()}});
}

RenderSummary cmd_render_per_frame(const ExperimentConfig& cfg, const std::string& name) {
  cfg.validate();
  const RunLayout L = layout_for(cfg);
  const SynthAssets a = load_synth(cfg);
  const ImageBuffer style = load_style_image(cfg);
  const FeatureExtractor<float> extractor = make_extractor<float>(cfg.style.transfer.extractor);
  std::vector<ImageBuffer> frames;
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    const fs::path gt = L.ground_truth() / "test" / indexed("frame", int(i), ".raw");
    require_file(gt, "ground-truth frame");
    frames.push_back(stylize_image(extractor, io::read_raw(gt), style, cfg.style.transfer));
  }
  return write_frames(L.render_dir(name), frames, {{"method", "per-frame"}, {"style", style_id(cfg)}});
}

std::vector<ImageBuffer> load_frames(const fs::path& manifest) {
  require_file(manifest, "frame manifest");
  const json j = io::read_json(manifest);
  if (!j.contains("frames") || !j["frames"].is_array()) throw FormatError("manifest has no frame list");
  std::vector<ImageBuffer> frames;
  for (const auto& f : j["frames"]) {
    const fs::path p = manifest.parent_path() / f.get<std::string>();
    require_file(p, "frame");
    frames.push_back(p.extension() == ".png" ? io::read_png(p) : io::read_raw(p));
  }
  return frames;
}

FlowMap load_flows(const fs::path& dir, int n_frames, const std::vector<int>& offsets) {
  FlowMap flows;
  for (int d : offsets)
    for (int i = 0; i + d < n_frames; ++i) {
      require_file(dir / ("flow_" + std::to_string(i) + "_" + std::to_string(i + d) + ".raw"), "flow");
      flows[{i, i + d}] = io::read_flow(dir, i, i + d);
    }
  return flows;
}

json to_json(const ConsistencyReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs) pairs.push_back({{"i", p.frame_i}, {"j", p.frame_j}, {"error", p.error}, {"n_valid", p.n_valid}});
  json offsets = json::object();
  for (const auto& [d, m] : r.offset_means) offsets[std::to_string(d)] = m;
  return {{"sequence", r.sequence_id},     {"style", r.style_id},
          {"pairs", pairs},                {"offset_means", offsets},
          {"short_range", r.short_range_mean}, {"long_range", r.long_range_mean}};
}

ConsistencyReport cmd_evaluate(const ExperimentConfig& cfg, const fs::path& frames_manifest, const fs::path& flow_dir,
                               const std::string& method) {
  cfg.validate();
  const std::vector<ImageBuffer> frames = load_frames(frames_manifest);
  const FlowMap flows = load_flows(flow_dir, int(frames.size()));
  ConsistencyReport r = evaluate_sequence(frames, flows);
  r.sequence_id = method;
  r.style_id = style_id(cfg);

  const fs::path dir = layout_for(cfg).evaluate_dir(method);
  io::write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  std::ostringstream csv;
  csv << kCsvHeader << "\n" << std::setprecision(17);
  for (const auto& [d, m] : r.offset_means) csv << method << "," << scene_name(cfg) << "," << d << "," << m << "\n";
  io::write_text(dir / "report.csv", csv.str());
  return r;
}

json cmd_report(const ExperimentConfig& cfg) {
  const RunLayout L = layout_for(cfg);
  const fs::path eval_root = L.root / "evaluate";
  if (!fs::exists(eval_root)) throw MissingAssetError("no evaluation reports under " + eval_root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(eval_root))
    if (e.is_directory() && fs::exists(e.path() / "report.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  json methods = json::object();
  std::ostringstream csv;
  csv << kCsvHeader << "\n" << std::setprecision(17);
  for (const auto& d : dirs) {
    const json r = io::read_json(d / "report.json");
    const std::string method = d.filename().string();
    methods[method] = {{"short_range", r.at("short_range")}, {"long_range", r.at("long_range")}};
    for (const auto& [off, m] : r.at("offset_means").items())
      csv << method << "," << scene_name(cfg) << "," << off << "," << m.get<double>() << "\n";
  }
  const json out = {{"scene", scene_name(cfg)}, {"methods", methods}};
  io::write_text(L.root / "report.json", out.dump(2) + "\n");
  io::write_text(L.root / "report.csv", csv.str());
  return out;
}

}  // namespace snerf
