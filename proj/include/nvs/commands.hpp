#pragma once

// File-level implementations of the CLI subcommands.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nvs/config.hpp"
#include "nvs/metrics.hpp"
#include "nvs/splits.hpp"

namespace nvs {

void cmd_gen_data(const std::string& out, int count, const std::vector<Split>& bins,
                  std::uint64_t seed, int image_size);

/// Writes train_log.csv, ckpt_NNNNNN.nvsc every checkpoint_every steps,
/// final.nvsc and depth_eval.txt (abs-rel on held-out scenes) into config.out.
void cmd_train_depth(const RunConfig& config, std::ostream& progress);

struct ViewTrainOptions {
  std::string depth_ckpt;  // empty with use_gt_depth
  bool use_gt_depth = false;
  std::string resume;      // checkpoint to continue from
};

/// Writes train_log.csv, periodic checkpoints and final.nvsc into config.out.
/// A non-finite loss leaves nan_dump.txt naming the batch seed and rethrows.
void cmd_train_view(const RunConfig& config, const ViewTrainOptions& options, std::ostream& progress);

struct RenderResult {
  double seconds = 0;  // wall clock of the forward pass, depth prediction included
  int forward_passes = 0;
  double out_of_view_ratio = 0;
};

/// Writes tgt.ppm, warped.ppm (input splatted at full resolution) and mask.pgm
/// (quarter resolution, 255 = out of view) into `out`.
RenderResult cmd_render(const std::string& ckpt, const std::string& image,
                        const std::optional<std::string>& depth, const std::array<double, 12>& pose,
                        const std::string& out);

/// Writes pred_NNNN.ppm and eval.csv (eval_identity.csv with `identity`, where
/// every sample is reconstructed under the identity pose against its reference).
EvalReport cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out,
                    bool identity);

/// Writes hist_<split>.csv for every split with samples; empty splits are absent.
std::map<Split, Histogram> cmd_analyze(const std::string& ckpt, const std::string& data,
                                       const std::string& out);

std::array<double, 12> parse_pose(const std::string& text);

}  // namespace nvs
