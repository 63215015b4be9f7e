#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/tensorcore/rng.hpp"

namespace wavesfm::sp {

struct AugmentPolicy {
  bool enabled = false;
  double min_area = 0.7;
  double max_area = 1.0;
  double min_aspect = 3.0 / 4.0;
  double max_aspect = 4.0 / 3.0;
  // Horizontal (time-axis) flip with probability 1/2; spectrograms only.
  bool flip_spectrograms = true;
  std::size_t image_size = 224;
};

// Random resized crop followed by an optional flip. Labels and metadata are
// carried over unchanged. With the policy disabled the sample is returned as is.
GridSample augment(const GridSample& sample, tc::RngState& rng, const AugmentPolicy& policy);

// Draw order that oversamples every corpus up to the size of the largest one.
// Returns (corpus, index) pairs, shuffled.
std::vector<std::pair<std::size_t, std::size_t>> balanced_oversample(const std::vector<std::size_t>& corpus_sizes,
                                                                     tc::RngState& rng);

}  // namespace wavesfm::sp
