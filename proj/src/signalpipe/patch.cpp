#include "wavesfm/signalpipe/patch.hpp"

#include <string>

#include "wavesfm/signalpipe/grid_sample.hpp"

namespace wavesfm::sp {

namespace {

void check_divisible(std::size_t h, std::size_t w, std::size_t patch) {
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw tc::ShapeError("patch size " + std::to_string(patch) + " does not divide grid " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
}

}  // namespace

std::vector<std::size_t> patch_to_grid_index(std::size_t h, std::size_t w, std::size_t c, std::size_t patch) {
  check_divisible(h, w, patch);
  const std::size_t cols = w / patch;
  const std::size_t pd = patch * patch * c;
  std::vector<std::size_t> index(h * w * c);
  for (std::size_t n = 0; n < index.size() / pd; ++n) {
    const std::size_t pr = n / cols, pc = n % cols;
    for (std::size_t i = 0; i < patch; ++i) {
      for (std::size_t j = 0; j < patch; ++j) {
        for (std::size_t k = 0; k < c; ++k) {
          index[n * pd + (i * patch + j) * c + k] = grid_index(w, c, pr * patch + i, pc * patch + j, k);
        }
      }
    }
  }
  return index;
}

std::vector<std::size_t> grid_to_patch_index(std::size_t h, std::size_t w, std::size_t c, std::size_t patch) {
  const auto forward = patch_to_grid_index(h, w, c, patch);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  return inverse;
}

PatchSeq patchify(const tc::Tensor& grid, std::size_t patch) {
  check_grid(grid, "patchify");
  const std::size_t h = grid.dim(0), w = grid.dim(1), c = grid.dim(2);
  const auto index = patch_to_grid_index(h, w, c, patch);
  std::vector<double> out(index.size());
  auto in = grid.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = in[index[i]];
  PatchSeq seq;
  seq.rows = h / patch;
  seq.cols = w / patch;
  seq.patch = patch;
  seq.channels = c;
  seq.patches = tc::Tensor::from({seq.count(), seq.patch_dim()}, std::move(out));
  return seq;
}

tc::Tensor unpatchify(const PatchSeq& seq) {
  const std::size_t h = seq.rows * seq.patch, w = seq.cols * seq.patch, c = seq.channels;
  if (seq.patches.rank() != 2 || seq.patches.dim(0) != seq.count() || seq.patches.dim(1) != seq.patch_dim()) {
    throw tc::ShapeError("unpatchify: patch tensor " + tc::shape_str(seq.patches.shape()) + " inconsistent with grid");
  }
  const auto index = patch_to_grid_index(h, w, c, seq.patch);
  std::vector<double> out(index.size());
  auto in = seq.patches.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] = in[i];
  return tc::Tensor::from({h, w, c}, std::move(out));
}

}  // namespace wavesfm::sp
