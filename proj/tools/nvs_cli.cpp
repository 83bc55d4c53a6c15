// nvs: data generation, training, rendering and evaluation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "nvs/commands.hpp"
#include "nvs/errors.hpp"

namespace {

int fail(const char* kind, const std::string& msg, int code) {
  std::string line = msg;
  for (auto& c : line) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error[" << kind << "]: " << line << "\n";
  return code;
}

std::vector<nvs::Split> parse_bins(const std::string& text) {
  std::vector<nvs::Split> bins;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      const auto s = nvs::parse_split(item);
      if (s == nvs::Split::kOutOfRange) throw nvs::ValidationError("");
      bins.push_back(s);
    } catch (const nvs::ValidationError&) {
      throw nvs::ValidationError("--bins: unknown split '" + item + "' (use small, medium, large)");
    }
  }
  return bins;
}

nvs::RunConfig load_run_config(const std::string& path, const std::string& data, const std::string& out) {
  auto cfg = nvs::load_config(path);
  if (!data.empty()) cfg.data = data;
  if (!out.empty()) cfg.out = out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image novel view synthesis toolkit"};
  app.require_subcommand(1);

  std::string out, data, config, ckpt, image, depth, pose, depth_ckpt, resume;
  std::string bins = "small,medium,large";
  int count = 30, size = 64;
  std::uint64_t seed = 1;
  bool use_gt_depth = false, identity = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of samples");
  gen->add_option("--bins", bins, "Comma-separated splits cycled over samples");
  gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--size", size, "Image size in pixels");

  auto* tdepth = app.add_subcommand("train-depth", "Train DepthNet self-supervised");
  tdepth->add_option("--config", config, "Run config")->required();
  tdepth->add_option("--data", data, "Dataset whose scenes are used");
  tdepth->add_option("--out", out, "Output directory");

  auto* tview = app.add_subcommand("train-view", "Train ViewNet with a frozen depth source");
  tview->add_option("--config", config, "Run config")->required();
  tview->add_option("--data", data, "Dataset directory");
  tview->add_option("--out", out, "Output directory");
  tview->add_option("--depth-ckpt", depth_ckpt, "DepthNet checkpoint");
  tview->add_flag("--use-gt-depth", use_gt_depth, "Use the dataset's ground-truth depth");
  tview->add_option("--resume", resume, "Checkpoint to continue from");

  auto* render = app.add_subcommand("render", "Render one novel view");
  render->add_option("--ckpt", ckpt, "ViewNet checkpoint")->required();
  render->add_option("--image", image, "Reference image (PPM)")->required();
  render->add_option("--depth", depth, "Reference depth (PFM)");
  render->add_option("--pose", pose, "12 numbers: R row-major then t")->required();
  render->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "PSNR-all / PSNR-vis per split");
  eval->add_option("--ckpt", ckpt, "ViewNet checkpoint")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_flag("--identity", identity, "Reconstruct each reference under the identity pose");

  auto* analyze = app.add_subcommand("analyze", "Norm-ratio histograms per split");
  analyze->add_option("--ckpt", ckpt, "ViewNet checkpoint")->required();
  analyze->add_option("--data", data, "Dataset directory")->required();
  analyze->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*gen) {
      nvs::cmd_gen_data(out, count, parse_bins(bins), seed, size);
      std::cout << "wrote " << count << " samples to " << out << "\n";
    } else if (*tdepth) {
      nvs::cmd_train_depth(load_run_config(config, data, out), std::cout);
    } else if (*tview) {
      nvs::ViewTrainOptions opts{depth_ckpt, use_gt_depth, resume};
      nvs::cmd_train_view(load_run_config(config, data, out), opts, std::cout);
    } else if (*render) {
      const auto p = nvs::parse_pose(pose);
      const auto r = nvs::cmd_render(ckpt, image, depth.empty() ? std::nullopt : std::optional(depth), p, out);
      std::printf("forward_passes=%d seconds=%.4f out_of_view_ratio=%.4f\n", r.forward_passes, r.seconds,
                  r.out_of_view_ratio);
    } else if (*eval) {
      const auto report = nvs::cmd_eval(ckpt, data, out, identity);
      for (const auto& s : report.summary) {
        std::printf("%s count=%d", nvs::split_name(s.bin).c_str(), s.count);
        if (s.psnr_all) std::printf(" psnr_all=%.3f", *s.psnr_all);
        if (s.psnr_vis) std::printf(" psnr_vis=%.3f", *s.psnr_vis);
        std::printf("%s\n", s.count ? "" : " absent");
      }
    } else if (*analyze) {
      const auto h = nvs::cmd_analyze(ckpt, data, out);
      for (auto s : {nvs::Split::kSmall, nvs::Split::kMedium, nvs::Split::kLarge}) {
        std::printf("%s %s\n", nvs::split_name(s).c_str(), h.count(s) ? "written" : "absent");
      }
    }
  } catch (const nvs::ValidationError& e) {
    return fail("validation", e.what(), 2);
  } catch (const nvs::ShapeError& e) {
    return fail("shape", e.what(), 2);
  } catch (const nvs::IoError& e) {
    return fail("io", e.what(), 3);
  } catch (const nvs::DomainError& e) {
    return fail("domain", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
