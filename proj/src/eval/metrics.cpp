#include "nvs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nvs/errors.hpp"

namespace nvs {

std::optional<double> psnr(const Image& pred, const Image& gt, const std::vector<std::uint8_t>* mask) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ShapeError("psnr: image sizes differ");
  }
  const std::size_t hw = static_cast<std::size_t>(pred.width * pred.height);
  if (mask && mask->size() != hw) throw ShapeError("psnr: mask does not match the image");
  double se = 0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    if (mask && !(*mask)[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pred.data[c * hw + p]) - gt.data[c * hw + p];
      se += d * d;
    }
    n += 3;
  }
  if (n == 0) return std::nullopt;
  const double mse = se / static_cast<double>(n);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

std::vector<std::uint8_t> visible_mask(const OutOfViewMask& o, int factor) {
  const int w = o.width * factor, h = o.height * factor;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(w * h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m[static_cast<std::size_t>(y * w + x)] =
          o.o[static_cast<std::size_t>((y / factor) * o.width + x / factor)] ? 0 : 1;
    }
  }
  return m;
}

std::vector<double> log_edges(double lo, double hi, int bins) {
  if (!(lo > 0) || !(hi > lo) || bins < 1) throw ValidationError("log_edges: need 0 < lo < hi, bins >= 1");
  std::vector<double> e(static_cast<std::size_t>(bins + 1));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / bins);
  e.front() = lo;
  e.back() = hi;
  return e;
}

Histogram norm_ratio_histogram(const std::vector<std::vector<double>>& maps,
                               const std::vector<double>& edges) {
  if (maps.empty()) throw ValidationError("norm_ratio_histogram needs at least one map");
  if (edges.size() < 2) throw ValidationError("histogram needs at least two edges");
  Histogram h;
  h.edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  for (const auto& m : maps) {
    for (double v : m) {
      // upper_bound gives the first edge > v; bin = that index - 1, clamped.
      auto it = std::upper_bound(edges.begin(), edges.end(), v);
      std::ptrdiff_t bin = (it - edges.begin()) - 1;
      bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
      ++h.counts[static_cast<std::size_t>(bin)];
    }
  }
  return h;
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "bin_lo,bin_hi,count\n";
  char buf[96];
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%lld\n", h.edges[i], h.edges[i + 1],
                  static_cast<long long>(h.counts[i]));
    f << buf;
  }
  if (!f) throw IoError("write failed for " + path);
}

EvalReport summarize(std::vector<EvalRow> rows) {
  EvalReport r;
  r.rows = std::move(rows);
  for (Split s : {Split::kSmall, Split::kMedium, Split::kLarge}) {
    SplitSummary sum;
    sum.bin = s;
    double a = 0, v = 0;
    int na = 0, nv = 0;
    for (const auto& row : r.rows) {
      if (row.bin != s) continue;
      ++sum.count;
      if (row.psnr_all) {
        a += *row.psnr_all;
        ++na;
      }
      if (row.psnr_vis) {
        v += *row.psnr_vis;
        ++nv;
      }
    }
    if (na) sum.psnr_all = a / na;
    if (nv) sum.psnr_vis = v / nv;
    r.summary.push_back(sum);
  }
  return r;
}

namespace {

std::string field(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "id,bin,psnr_all,psnr_vis\n";
  for (const auto& r : report.rows) {
    f << r.id << ',' << split_name(r.bin) << ',' << field(r.psnr_all) << ',' << field(r.psnr_vis)
      << '\n';
  }
  f << "\nsplit,count,psnr_all,psnr_vis\n";
  for (const auto& s : report.summary) {
    f << split_name(s.bin) << ',' << s.count << ',' << field(s.psnr_all) << ','
      << field(s.psnr_vis) << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace nvs
