#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::sp {

enum class Modality { kSpectrogram, kCsi, kOfdmGrid };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

// Image-like wireless sample, data laid out as [H x W x C] row-major.
struct GridSample {
  tc::Tensor data;
  Modality modality = Modality::kSpectrogram;
  std::optional<int> label;
  std::optional<std::array<double, 3>> position;
  std::optional<double> snr_db;
  // Regression target grid for channel estimation ([H x W x 2], Re/Im).
  tc::Tensor target;
  std::string sample_id;

  std::size_t height() const { return data.dim(0); }
  std::size_t width() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }
};

// Validates rank-3 layout with positive extents; throws ShapeError otherwise.
void check_grid(const tc::Tensor& t, const char* where);

inline std::size_t grid_index(std::size_t w_extent, std::size_t c_extent, std::size_t h, std::size_t w,
                              std::size_t c) {
  return (h * w_extent + w) * c_extent + c;
}

}  // namespace wavesfm::sp
