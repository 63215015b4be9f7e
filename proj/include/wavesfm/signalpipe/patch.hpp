#pragma once

#include <cstddef>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::sp {

// Row-major sequence of flattened P x P x C patches. Within a patch the
// element order is (row, col, channel).
struct PatchSeq {
  tc::Tensor patches;  // [N x P*P*C]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch = 0;
  std::size_t channels = 0;

  std::size_t count() const { return rows * cols; }
  std::size_t patch_dim() const { return patch * patch * channels; }
};

PatchSeq patchify(const tc::Tensor& grid, std::size_t patch);
tc::Tensor unpatchify(const PatchSeq& seq);

// Flat-index maps between an [H x W x C] grid and its [N x P*P*C] patch
// layout: patch_to_grid[i] is the grid element feeding patch element i.
std::vector<std::size_t> patch_to_grid_index(std::size_t h, std::size_t w, std::size_t c, std::size_t patch);
std::vector<std::size_t> grid_to_patch_index(std::size_t h, std::size_t w, std::size_t c, std::size_t patch);

}  // namespace wavesfm::sp
