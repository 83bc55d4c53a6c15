#pragma once

// PSNR-all / PSNR-vis, split summaries and norm-ratio histograms.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvs/image_io.hpp"
#include "nvs/splits.hpp"
#include "nvs/warp.hpp"

namespace nvs {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over pixels with mask != 0 (all pixels without a mask),
/// capped at kPsnrCap; nullopt when the mask selects nothing.
std::optional<double> psnr(const Image& pred, const Image& gt,
                           const std::vector<std::uint8_t>* mask = nullptr);

/// 1 - O, nearest-neighbour upsampled by `factor`.
std::vector<std::uint8_t> visible_mask(const OutOfViewMask& o, int factor = 4);

struct Histogram {
  std::vector<double> edges;          // ascending, counts.size() + 1 entries
  std::vector<std::int64_t> counts;   // [e_i, e_{i+1}); values outside go to the end bins
};

std::vector<double> log_edges(double lo = 0.125, double hi = 8.0, int bins = 24);
Histogram norm_ratio_histogram(const std::vector<std::vector<double>>& maps,
                               const std::vector<double>& edges = log_edges());
void write_histogram_csv(const std::string& path, const Histogram& h);

struct EvalRow {
  std::string id;
  Split bin = Split::kOutOfRange;
  std::optional<double> psnr_all, psnr_vis;
};

struct SplitSummary {
  Split bin = Split::kOutOfRange;
  int count = 0;
  std::optional<double> psnr_all, psnr_vis;  // means over defined values
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<SplitSummary> summary;  // small, medium, large
};

EvalReport summarize(std::vector<EvalRow> rows);
/// `id,bin,psnr_all,psnr_vis` rows, a blank line, then
/// `split,count,psnr_all,psnr_vis` means; absent values are empty fields.
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace nvs
