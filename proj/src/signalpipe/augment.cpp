#include "wavesfm/signalpipe/augment.hpp"

#include <algorithm>
#include <cmath>

#include "wavesfm/signalpipe/preprocess.hpp"

namespace wavesfm::sp {

GridSample augment(const GridSample& sample, tc::RngState& rng, const AugmentPolicy& policy) {
  if (!policy.enabled) return sample;
  check_grid(sample.data, "augment");
  const std::size_t h = sample.height(), w = sample.width(), c = sample.channels();

  const double area = static_cast<double>(h * w) * rng.uniform(policy.min_area, policy.max_area);
  const double aspect = std::exp(rng.uniform(std::log(policy.min_aspect), std::log(policy.max_aspect)));
  auto crop_h = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
  auto crop_w = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
  crop_h = std::clamp<std::size_t>(crop_h, std::min<std::size_t>(2, h), h);
  crop_w = std::clamp<std::size_t>(crop_w, std::min<std::size_t>(2, w), w);
  const std::size_t top = static_cast<std::size_t>(rng.uniform_int(h - crop_h + 1));
  const std::size_t left = static_cast<std::size_t>(rng.uniform_int(w - crop_w + 1));
  const bool flip =
      policy.flip_spectrograms && sample.modality == Modality::kSpectrogram && rng.uniform() < 0.5;

  std::vector<double> crop(crop_h * crop_w * c);
  auto in = sample.data.data();
  for (std::size_t i = 0; i < crop_h; ++i) {
    for (std::size_t j = 0; j < crop_w; ++j) {
      const std::size_t src_col = flip ? left + crop_w - 1 - j : left + j;
      for (std::size_t k = 0; k < c; ++k) {
        crop[grid_index(crop_w, c, i, j, k)] = in[grid_index(w, c, top + i, src_col, k)];
      }
    }
  }
  GridSample out = sample;
  tc::Tensor cropped = tc::Tensor::from({crop_h, crop_w, c}, std::move(crop));
  if (crop_h >= 2 && crop_w >= 2) {
    out.data = bicubic_resize(cropped, policy.image_size, policy.image_size);
  } else {
    out.data = cropped;
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> balanced_oversample(const std::vector<std::size_t>& corpus_sizes,
                                                                     tc::RngState& rng) {
  std::size_t largest = 0;
  for (auto s : corpus_sizes) largest = std::max(largest, s);
  std::vector<std::pair<std::size_t, std::size_t>> draws;
  for (std::size_t corpus = 0; corpus < corpus_sizes.size(); ++corpus) {
    const std::size_t n = corpus_sizes[corpus];
    if (n == 0) continue;
    // Every sample once, then uniform repeats to fill up.
    for (std::size_t i = 0; i < largest; ++i) {
      draws.emplace_back(corpus, i < n ? i : static_cast<std::size_t>(rng.uniform_int(n)));
    }
  }
  const auto order = rng.permutation(draws.size());
  std::vector<std::pair<std::size_t, std::size_t>> shuffled;
  shuffled.reserve(draws.size());
  for (auto i : order) shuffled.push_back(draws[i]);
  return shuffled;
}

}  // namespace wavesfm::sp
