#pragma once

#include <utility>
#include <vector>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/tensorcore/ops.hpp"

namespace wavesfm::sp {

struct DatasetStats {
  double min = 0.0;
  double max = 1.0;
  std::vector<double> mean;  // per channel
  std::vector<double> std;   // per channel, population
};

class DegenerateStatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double kLogFloor = 1e-12;

// log10(max(x, floor)); throws on negative input.
tc::Tensor log_scale(const tc::Tensor& x, double floor = kLogFloor);

// Affine map of [stats.min, stats.max] onto [lo, hi], clamped to that range.
tc::Tensor minmax_normalize(const tc::Tensor& x, const DatasetStats& stats, double lo, double hi);

// Per-channel (x - mean_c) / std_c on an [H x W x C] grid.
tc::Tensor standardize(const tc::Tensor& x, const DatasetStats& stats);
tc::Tensor unstandardize(const tc::Tensor& x, const DatasetStats& stats);

// Dataset-wide min/max over every element and per-channel mean/std, one pass
// in sample order. Throws DegenerateStatsError when max == min or a channel
// has zero spread.
DatasetStats compute_stats(const std::vector<tc::Tensor>& grids);
DatasetStats compute_minmax(const std::vector<tc::Tensor>& grids);
DatasetStats compute_channel_stats(const std::vector<tc::Tensor>& grids);

// Catmull-Rom (a = -0.5) interpolation weights as a dense [out x in] matrix,
// half-pixel centers, edge-clamped taps. Rows sum to 1.
std::vector<double> cubic_resize_matrix(std::size_t in, std::size_t out);

// Separable bicubic resize of an [H x W x C] grid to [out_h x out_w x C].
tc::Tensor bicubic_resize(const tc::Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace wavesfm::sp
