#include "snerf/errors.hpp"
#include "snerf/io.hpp"
#include "snerf/pipeline.hpp"
#include "snerf/runtime.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kNumerical = 4 };

// "--train.T=3" and "--train.T 3" become config overrides; everything else goes to CLI11.
std::vector<std::string> extract_dotted(std::vector<std::string>& args) {
  std::vector<std::string> overrides, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    const auto eq = a.find('=');
    const std::string key = a.substr(0, eq);
    if (a.rfind("--", 0) == 0 && key.find('.') != std::string::npos) {
      if (eq != std::string::npos) {
        overrides.push_back(a.substr(2));
      } else if (i + 1 < args.size()) {
        overrides.push_back(key.substr(2) + "=" + args[++i]);
      } else {
        throw snerf::ConfigError("flag " + a + " needs a value");
      }
    } else {
      rest.push_back(a);
    }
  }
  args = rest;
  return overrides;
}

}  // namespace

int main(int argc, char** argv) {
  snerf::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> overrides;
  try {
    overrides = extract_dotted(args);
  } catch (const snerf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }

  CLI::App app{"Stylized radiance fields: synthesize, pretrain, stylize, render and evaluate"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, profile = "desk", output_dir;
  std::vector<std::string> sets;
  long long seed = -1;
  app.add_option("-c,--config", config_path, "experiment config (JSON)");
  app.add_option("--profile", profile, "defaults when no config file is given: desk or paper");
  app.add_option("-o,--output-dir", output_dir, "overrides output_dir");
  app.add_option("--seed", seed, "overrides the root seed");
  app.add_option("--set", sets, "dotted-path override key=value (repeatable); --key.path=value also works");

  auto* synth = app.add_subcommand("synth", "write scene, cameras, ground-truth views and flows");
  auto* pre = app.add_subcommand("pretrain", "fit the field to the realistic training views");
  auto* sty = app.add_subcommand("stylize", "alternating stylization, one checkpoint per iteration");
  std::string sty_ckpt;
  bool freeze = false;
  sty->add_option("--checkpoint", sty_ckpt, "starting field (default: pretrained checkpoint)");
  sty->add_flag("--freeze-geometry", freeze, "update only the appearance branch");

  auto* ren = app.add_subcommand("render", "render the test path to frames plus a hashed manifest");
  std::string ren_ckpt, ren_name = "snerf", ren_cams;
  bool per_frame = false;
  ren->add_option("--checkpoint", ren_ckpt, "field checkpoint");
  ren->add_option("--name", ren_name, "output subdirectory under render/");
  ren->add_option("--cameras", ren_cams, "camera file (default: synthesized test path)");
  ren->add_flag("--per-frame", per_frame, "stylize ground-truth frames independently instead of rendering");

  auto* ev = app.add_subcommand("evaluate", "cross-view consistency of a frame sequence");
  std::string ev_frames, ev_flows, ev_method;
  ev->add_option("--frames", ev_frames, "frame manifest")->required();
  ev->add_option("--flows", ev_flows, "flow directory (default: synthesized flows)");
  ev->add_option("--method", ev_method, "method label (default: frame directory name)");

  auto* rep = app.add_subcommand("report", "aggregate evaluation reports");
  auto* show = app.add_subcommand("config", "print the effective configuration");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    snerf::ExperimentConfig cfg =
        config_path.empty() ? snerf::default_config(snerf::parse_profile(profile)) : snerf::load_config(config_path);
    if (!output_dir.empty()) overrides.push_back("output_dir=\"" + output_dir + "\"");
    if (seed >= 0) overrides.push_back("seed=" + std::to_string(seed));
    if (freeze) overrides.push_back("train.freeze_geometry=true");
    for (const auto& s : sets) overrides.push_back(s);
    cfg = snerf::apply_overrides(cfg, overrides);
    const snerf::RunLayout L = snerf::layout_for(cfg);

    if (*show) {
      std::cout << snerf::to_json(cfg).dump(2) << "\n";
    } else if (*synth) {
      const auto a = snerf::cmd_synth(cfg);
      snerf::save_config((L.root / "config.json").string(), cfg);
      std::cout << "synth: " << a.train.size() << " training views, " << a.test.size() << " test frames -> "
                << L.root.string() << "\n";
    } else if (*pre) {
      const auto s = snerf::cmd_pretrain(cfg);
      std::cout << "pretrain: train PSNR " << s.train_psnr << " dB, held-out PSNR " << s.heldout_psnr << " dB\n";
    } else if (*sty) {
      const auto s = snerf::cmd_stylize(cfg, sty_ckpt);
      for (const auto& d : s.iterations)
        std::cout << "iteration " << d.iteration << ": style " << d.mean_style_loss << ", content "
                  << d.mean_content_loss << "\n";
      std::cout << "diagnostics: " << s.diagnostics.string() << "\n";
    } else if (*ren) {
      snerf::RenderSummary s;
      if (per_frame) {
        s = snerf::cmd_render_per_frame(cfg, ren_name);
      } else {
        if (ren_ckpt.empty()) throw snerf::ConfigError("render needs --checkpoint (or --per-frame)");
        s = snerf::cmd_render(cfg, ren_ckpt, ren_name, ren_cams);
      }
      std::cout << "render: " << s.frames.size() << " frames, manifest " << s.manifest.string() << "\n";
    } else if (*ev) {
      const std::filesystem::path frames(ev_frames);
      const std::string method = ev_method.empty() ? frames.parent_path().filename().string() : ev_method;
      const std::filesystem::path flows = ev_flows.empty() ? L.flow_dir() : std::filesystem::path(ev_flows);
      const auto r = snerf::cmd_evaluate(cfg, frames, flows, method);
      std::cout << "evaluate " << method << ": short-range " << r.short_range_mean << ", long-range "
                << r.long_range_mean << "\n";
    } else if (*rep) {
      std::cout << snerf::cmd_report(cfg).dump(2) << "\n";
    }
    return kOk;
  } catch (const snerf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const snerf::MissingAssetError& e) {
    std::cerr << "missing asset: " << e.what() << "\n";
    return kMissing;
  } catch (const snerf::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
