#include "wavesfm/signalpipe/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wavesfm::sp {

tc::Tensor log_scale(const tc::Tensor& x, double floor) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (in[i] < 0.0) throw std::invalid_argument("log_scale: negative input " + std::to_string(in[i]));
    out[i] = std::log10(std::max(in[i], floor));
  }
  return tc::Tensor::from(x.shape(), std::move(out));
}

tc::Tensor minmax_normalize(const tc::Tensor& x, const DatasetStats& stats, double lo, double hi) {
  if (!(stats.max > stats.min)) throw DegenerateStatsError("minmax_normalize: dataset max must exceed min");
  const double span = stats.max - stats.min;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(in[i], stats.min, stats.max);
    out[i] = lo + (hi - lo) * (v - stats.min) / span;
  }
  return tc::Tensor::from(x.shape(), std::move(out));
}

namespace {

void check_channel_stats(const tc::Tensor& x, const DatasetStats& stats, const char* where) {
  check_grid(x, where);
  const std::size_t c = x.dim(2);
  if (stats.mean.size() != c || stats.std.size() != c) {
    throw tc::ShapeError(std::string(where) + ": stats cover " + std::to_string(stats.mean.size()) +
                         " channels, grid has " + std::to_string(c));
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw DegenerateStatsError(std::string(where) + ": zero channel std");
  }
}

}  // namespace

tc::Tensor standardize(const tc::Tensor& x, const DatasetStats& stats) {
  check_channel_stats(x, stats, "standardize");
  const std::size_t c = x.dim(2);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - stats.mean[i % c]) / stats.std[i % c];
  return tc::Tensor::from(x.shape(), std::move(out));
}

tc::Tensor unstandardize(const tc::Tensor& x, const DatasetStats& stats) {
  check_channel_stats(x, stats, "unstandardize");
  const std::size_t c = x.dim(2);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stats.std[i % c] + stats.mean[i % c];
  return tc::Tensor::from(x.shape(), std::move(out));
}

DatasetStats compute_minmax(const std::vector<tc::Tensor>& grids) {
  if (grids.empty()) throw DegenerateStatsError("compute_stats: empty dataset");
  DatasetStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (const auto& g : grids) {
    for (double v : g.data()) {
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
    }
  }
  if (!(s.max > s.min)) throw DegenerateStatsError("compute_stats: dataset max equals min");
  return s;
}

DatasetStats compute_channel_stats(const std::vector<tc::Tensor>& grids) {
  if (grids.empty()) throw DegenerateStatsError("compute_stats: empty dataset");
  check_grid(grids.front(), "compute_stats");
  const std::size_t c = grids.front().dim(2);
  std::vector<double> total(c, 0.0), total_sq(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  // Two sums per channel; the mean is subtracted afterwards in a second pass
  // to keep the variance accurate for large offsets.
  for (const auto& g : grids) {
    check_grid(g, "compute_stats");
    if (g.dim(2) != c) throw tc::ShapeError("compute_stats: channel count differs between samples");
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      total[i % c] += d[i];
      ++count[i % c];
    }
  }
  DatasetStats s;
  s.mean.resize(c);
  s.std.resize(c);
  for (std::size_t k = 0; k < c; ++k) s.mean[k] = total[k] / static_cast<double>(count[k]);
  for (const auto& g : grids) {
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double dv = d[i] - s.mean[i % c];
      total_sq[i % c] += dv * dv;
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    s.std[k] = std::sqrt(total_sq[k] / static_cast<double>(count[k]));
    if (!(s.std[k] > 0.0)) {
      throw DegenerateStatsError("compute_stats: channel " + std::to_string(k) + " is constant");
    }
  }
  return s;
}

DatasetStats compute_stats(const std::vector<tc::Tensor>& grids) {
  DatasetStats s = compute_minmax(grids);
  DatasetStats ch = compute_channel_stats(grids);
  s.mean = std::move(ch.mean);
  s.std = std::move(ch.std);
  return s;
}

namespace {

double catmull_rom(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

std::vector<double> cubic_resize_matrix(std::size_t in, std::size_t out) {
  if (out < 1) throw std::invalid_argument("resize: output extent must be at least 1");
  if (in < 1) throw std::invalid_argument("resize: input extent must be at least 1");
  std::vector<double> m(out * in, 0.0);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = -1; k <= 2; ++k) {
      const double w = catmull_rom(t - k);
      const auto idx = static_cast<long long>(base) + k;
      const auto clamped = static_cast<std::size_t>(std::clamp<long long>(idx, 0, static_cast<long long>(in) - 1));
      m[o * in + clamped] += w;
    }
  }
  return m;
}

tc::Tensor bicubic_resize(const tc::Tensor& x, std::size_t out_h, std::size_t out_w) {
  check_grid(x, "bicubic_resize");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic_resize: output extent must be at least 1");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h < 2 || w < 2) throw std::invalid_argument("bicubic_resize: input extents must be at least 2");
  if (h == out_h && w == out_w) return x.detach();

  const auto rh = cubic_resize_matrix(h, out_h);
  const auto rw = cubic_resize_matrix(w, out_w);
  auto in = x.data();
  // Rows first, then columns.
  std::vector<double> tmp(out_h * w * c, 0.0);
  for (std::size_t o = 0; o < out_h; ++o) {
    for (std::size_t i = 0; i < h; ++i) {
      const double wt = rh[o * h + i];
      if (wt == 0.0) continue;
      const double* src = in.data() + i * w * c;
      double* dst = tmp.data() + o * w * c;
      for (std::size_t j = 0; j < w * c; ++j) dst[j] += wt * src[j];
    }
  }
  std::vector<double> out(out_h * out_w * c, 0.0);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t o = 0; o < out_w; ++o) {
      double* dst = out.data() + (r * out_w + o) * c;
      for (std::size_t j = 0; j < w; ++j) {
        const double wt = rw[o * w + j];
        if (wt == 0.0) continue;
        const double* src = tmp.data() + (r * w + j) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += wt * src[k];
      }
    }
  }
  return tc::Tensor::from({out_h, out_w, c}, std::move(out));
}

}  // namespace wavesfm::sp
