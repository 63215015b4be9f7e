#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wavesfm/signalpipe/archive.hpp"
#include "wavesfm/wavesim/ofdm.hpp"
#include "wavesfm/wavesim/sensing.hpp"
#include "wavesfm/wavesim/spectrogram.hpp"

namespace wavesfm::sim {

enum class DatasetKind { kSpectrogram, kActivity, kPositioning, kChanEst };

std::string_view dataset_kind_name(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSpectrogram;
  std::size_t count = 256;
  // Spectrogram classes to draw from; labels are positions in this list.
  // Empty means all kSpectrogramClasses classes.
  std::vector<int> classes;
  double snr_min_db = 0.0;   // spectrogram SNR range
  double snr_max_db = 20.0;
  double gain_spread_db = 10.0;  // per-capture gain uniform in +-spread
  // Emit 20 log10 |STFT| (spectrogram images) instead of linear magnitude.
  bool db_scale = false;
  StftConfig stft{256, 64, 64, 4};
  FrontEnd front_end{0.35, -40.0};
  ActivityConfig activity;
  PositioningConfig positioning;
  OfdmConfig ofdm;

  void validate() const;
  std::size_t num_classes() const;
};

nlohmann::json to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Sample i is drawn from RngState(seed).split(i) so the result does not
// depend on the thread count. Classification datasets cycle through classes
// for a balanced split.
sp::Archive generate_dataset(const DatasetSpec& spec, std::uint64_t seed, std::size_t threads = 0);

}  // namespace wavesfm::sim
