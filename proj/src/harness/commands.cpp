#include "nvs/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvs/ops.hpp"
#include "nvs/train.hpp"
#include "nvs/warp.hpp"

namespace nvs {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string step_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06d.nvsc", step);
  return buf;
}

void require_out(const std::string& out) {
  if (out.empty()) throw ValidationError("no output directory (set --out or `out` in the config)");
  fs::create_directories(out);
}

// Keeps the header and the first `rows` data rows of an existing log.
void truncate_log(const std::string& path, int rows) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot reopen training log " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line) && static_cast<int>(lines.size()) <= rows) lines.push_back(line);
  in.close();
  if (static_cast<int>(lines.size()) != rows + 1) {
    throw IoError("training log " + path + " has fewer rows than the resumed step");
  }
  std::ofstream o(path, std::ios::trunc);
  for (const auto& l : lines) o << l << "\n";
}

std::vector<double> depth_for_inference(const LoadedModel& m, const Image& image,
                                        const std::vector<double>* stored) {
  if (!m.depth) {
    if (!stored) throw ValidationError("checkpoint has no DepthNet; provide a depth map");
    return *stored;
  }
  return predict_depth(*m.depth, image);
}

}  // namespace

void cmd_gen_data(const std::string& out, int count, const std::vector<Split>& bins,
                  std::uint64_t seed, int image_size) {
  if (count < 1) throw ValidationError("--count must be positive");
  if (bins.empty()) throw ValidationError("--bins must name at least one split");
  fs::create_directories(out);
  build_dataset(out, count, bins, seed, image_size);
}

void cmd_train_depth(const RunConfig& config, std::ostream& progress) {
  require_out(config.out);
  std::vector<std::uint64_t> seeds;
  if (!config.data.empty()) {
    for (const auto& e : load_manifest(config.data).entries) seeds.push_back(e.seed);
  }
  DepthTrainer trainer(config, seeds);
  std::ofstream log(join(config.out, "train_log.csv"), std::ios::trunc);
  log << depth_log_header() << "\n";
  for (int s = 0; s < config.depth_steps; ++s) {
    const auto row = trainer.step();
    log << depth_log_row(row) << "\n";
    if ((s + 1) % config.checkpoint_every == 0) {
      save_checkpoint(join(config.out, step_name(s + 1)), trainer.checkpoint());
      progress << "depth step " << s + 1 << " loss " << row.total << "\n";
    }
  }
  log.flush();
  save_checkpoint(join(config.out, "final.nvsc"), trainer.checkpoint());
  const double abs_rel = depth_abs_rel(trainer.net(), config.seed, 20, config.view.image_size);
  char buf[64];
  std::snprintf(buf, sizeof buf, "abs_rel=%.6f\n", abs_rel);
  std::ofstream(join(config.out, "depth_eval.txt")) << buf;
  progress << "held-out " << buf;
}

void cmd_train_view(const RunConfig& config, const ViewTrainOptions& options, std::ostream& progress) {
  require_out(config.out);
  if (config.data.empty()) throw ValidationError("no dataset (set --data or `data` in the config)");
  if (options.use_gt_depth == !options.depth_ckpt.empty()) {
    throw ValidationError("pass exactly one of --depth-ckpt and --use-gt-depth");
  }
  const auto data = load_dataset(config.data);
  std::shared_ptr<DepthNet<float>> depth;
  if (!options.depth_ckpt.empty()) {
    auto m = load_model(options.depth_ckpt);
    if (!m.depth) throw ValidationError("checkpoint " + options.depth_ckpt + " holds no DepthNet");
    if (m.config.depth.widths != config.depth.widths) {
      throw ValidationError("depth_widths differ from the DepthNet checkpoint");
    }
    depth = m.depth;
  }
  ViewTrainer trainer(config, data, depth);
  const std::string log_path = join(config.out, "train_log.csv");
  if (!options.resume.empty()) {
    trainer.restore(load_checkpoint(options.resume));
    truncate_log(log_path, trainer.steps_done());
  } else {
    std::ofstream(log_path, std::ios::trunc) << view_log_header() << "\n";
  }
  std::ofstream log(log_path, std::ios::app);
  while (trainer.steps_done() < config.steps) {
    ViewStepLog row;
    try {
      row = trainer.step();
    } catch (const DomainError& e) {
      std::ofstream(join(config.out, "nan_dump.txt")) << e.what() << "\n";
      throw;
    }
    log << view_log_row(row) << "\n";
    const int done = trainer.steps_done();
    if (done % config.checkpoint_every == 0) {
      log.flush();
      save_checkpoint(join(config.out, step_name(done)), trainer.checkpoint());
    }
    if (done % 50 == 0 || done == config.steps) progress << "view step " << done << " loss " << row.loss.total << "\n";
  }
  log.flush();
  save_checkpoint(join(config.out, "final.nvsc"), trainer.checkpoint());
}

std::array<double, 12> parse_pose(const std::string& text) {
  std::string s = text;
  for (auto& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream is(s);
  std::array<double, 12> v{};
  for (auto& x : v) {
    std::string tok;
    if (!(is >> tok)) throw ValidationError("--pose needs 12 numbers (R row-major, then t)");
    std::size_t used = 0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ValidationError("--pose holds a non-number '" + tok + "'");
  }
  std::string extra;
  if (is >> extra) throw ValidationError("--pose has more than 12 numbers");
  return v;
}

RenderResult cmd_render(const std::string& ckpt, const std::string& image,
                        const std::optional<std::string>& depth_path, const std::array<double, 12>& pose_flat,
                        const std::string& out) {
  const auto pose = RelativePose::from_flat(pose_flat);
  pose.validate();
  const auto model = load_model(ckpt);
  if (!model.view) throw ValidationError("checkpoint " + ckpt + " holds no ViewNet");
  const auto img = read_ppm(image);
  const int size = model.config.view.image_size;
  if (img.width != size || img.height != size) {
    throw ValidationError("image must be " + std::to_string(size) + "x" + std::to_string(size));
  }
  std::optional<std::vector<double>> stored;
  if (depth_path) {
    int w = 0, h = 0;
    stored = read_pfm(*depth_path, w, h);
    if (w != size || h != size) throw ValidationError("depth map size differs from the image");
  } else if (!model.depth) {
    throw ValidationError("checkpoint has no DepthNet; pass --depth");
  }
  fs::create_directories(out);
  const auto camera = default_camera(size);

  RenderResult result;
  NoGradGuard guard;
  const auto x = image_to_tensor<float>(img);
  const auto t0 = std::chrono::steady_clock::now();
  const auto depth = stored ? *stored : predict_depth(*model.depth, img);
  const auto output = model.view->forward(x, make_geometry(camera, depth), pose);
  const auto t1 = std::chrono::steady_clock::now();
  result.forward_passes = 1;
  result.seconds = std::chrono::duration<double>(t1 - t0).count();
  result.out_of_view_ratio = output.pair.mask.ratio();

  write_ppm(join(out, "tgt.ppm"), tensor_to_image(output.image));
  const auto flow = reproject(camera, unproject(camera, depth), pose);
  const auto rgb = image_to_tensor<float>(img);
  const auto warped = splat_forward(rgb, flow, depth_importance<float>(flow));
  write_ppm(join(out, "warped.ppm"), tensor_to_image(warped.warped));
  std::vector<std::uint8_t> mask(output.pair.mask.o.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = output.pair.mask.o[i] ? 255 : 0;
  write_pgm(join(out, "mask.pgm"), output.pair.mask.width, output.pair.mask.height, mask);
  return result;
}

EvalReport cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out,
                    bool identity) {
  const auto model = load_model(ckpt);
  if (!model.view) throw ValidationError("checkpoint " + ckpt + " holds no ViewNet");
  const auto data = load_dataset(data_dir);
  if (data.manifest.image_size != model.config.view.image_size) {
    throw ValidationError("dataset image size differs from the checkpoint");
  }
  fs::create_directories(out);
  const auto camera = default_camera(data.manifest.image_size);
  NoGradGuard guard;
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& entry = data.manifest.entries[i];
    const auto depth = depth_for_inference(model, data.refs[i], &data.depths[i]);
    const auto pose = identity ? RelativePose::identity() : entry.pose;
    const auto output = model.view->forward(image_to_tensor<float>(data.refs[i]), make_geometry(camera, depth), pose);
    const auto pred = quantized(tensor_to_image(output.image));
    char name[48];
    std::snprintf(name, sizeof name, "%s%04zu.ppm", identity ? "pred_identity_" : "pred_", i);
    write_ppm(join(out, name), pred);
    const Image& gt = identity ? data.refs[i] : data.gts[i];
    const auto vis = visible_mask(output.pair.mask);
    char id[32];
    std::snprintf(id, sizeof id, "sample_%04zu", i);
    rows.push_back({id, entry.bin, psnr(pred, gt), psnr(pred, gt, &vis)});
  }
  auto report = summarize(std::move(rows));
  write_eval_csv(join(out, identity ? "eval_identity.csv" : "eval.csv"), report);
  return report;
}

std::map<Split, Histogram> cmd_analyze(const std::string& ckpt, const std::string& data_dir,
                                       const std::string& out) {
  const auto model = load_model(ckpt);
  if (!model.view) throw ValidationError("checkpoint " + ckpt + " holds no ViewNet");
  const auto data = load_dataset(data_dir);
  fs::create_directories(out);
  const auto camera = default_camera(data.manifest.image_size);
  NoGradGuard guard;
  std::map<Split, std::vector<std::vector<double>>> maps;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& entry = data.manifest.entries[i];
    const auto depth = depth_for_inference(model, data.refs[i], &data.depths[i]);
    const auto output = model.view->forward(image_to_tensor<float>(data.refs[i]), make_geometry(camera, depth), entry.pose);
    maps[entry.bin].push_back(norm_ratio_map(output.pair.h_e, output.pair.h_i));
  }
  std::map<Split, Histogram> result;
  for (const auto& [split, m] : maps) {
    result[split] = norm_ratio_histogram(m);
    write_histogram_csv(join(out, "hist_" + split_name(split) + ".csv"), result[split]);
  }
  return result;
}

}  // namespace nvs
