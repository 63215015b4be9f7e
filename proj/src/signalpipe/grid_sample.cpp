#include "wavesfm/signalpipe/grid_sample.hpp"

#include <stdexcept>

namespace wavesfm::sp {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kSpectrogram: return "spectrogram";
    case Modality::kCsi: return "csi";
    case Modality::kOfdmGrid: return "ofdm-grid";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  if (name == "spectrogram") return Modality::kSpectrogram;
  if (name == "csi") return Modality::kCsi;
  if (name == "ofdm-grid") return Modality::kOfdmGrid;
  throw std::invalid_argument("unknown modality: " + std::string(name));
}

void check_grid(const tc::Tensor& t, const char* where) {
  if (!t.defined() || t.rank() != 3) {
    throw tc::ShapeError(std::string(where) + ": expected an [H x W x C] grid");
  }
}

}  // namespace wavesfm::sp
