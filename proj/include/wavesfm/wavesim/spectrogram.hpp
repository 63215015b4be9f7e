#pragma once

#include <complex>
#include <cstddef>
#include <string_view>
#include <vector>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/tensorcore/rng.hpp"

namespace wavesfm::sim {

enum class SignalKind { kTone, kChirp, kOfdmBurst, kFmLike, kHopper, kNoise };

std::string_view signal_kind_name(SignalKind k);

// Occupied region in normalized units: frequency in [-0.5, 0.5) cycles per
// sample, time as a fraction of the record.
struct OccupancyBox {
  double f_lo = -0.4;
  double f_hi = 0.4;
  double t_lo = 0.0;
  double t_hi = 1.0;
};

struct SceneSpec {
  int class_id = 0;
  SignalKind kind = SignalKind::kTone;
  OccupancyBox box;
  double snr_db = 10.0;
  double gain_db = 0.0;  // receiver gain applied to signal and noise alike
};

// Receiver front-end: magnitude response flat up to |f| = edge_start, then a
// raised-cosine roll-off reaching edge_floor_db at |f| = 0.5.
struct FrontEnd {
  double edge_start = 0.5;
  double edge_floor_db = -40.0;

  double response(double f) const;
};

// STFT geometry: Hann window of `fft_size`, hop `hop`. Each of the `frames`
// output columns averages the power of `average` consecutive windows
// (average = 1 is the plain STFT).
struct StftConfig {
  std::size_t fft_size = 256;
  std::size_t hop = 64;
  std::size_t frames = 64;
  std::size_t average = 1;

  std::size_t windows() const { return frames * average; }
  std::size_t signal_length() const { return fft_size + hop * (windows() - 1); }
};

// Twenty classes: the six signal kinds over the full band, then the five
// non-noise kinds confined to low, mid and high sub-bands (6 + 5 * 3 = 21,
// truncated to 20).
constexpr int kSpectrogramClasses = 20;
SceneSpec scene_for_class(int class_id, double snr_db);

// Complex baseband record for a scene, unit-power noise plus the signal at
// the scene SNR.
std::vector<std::complex<double>> synthesize_baseband(const SceneSpec& spec, std::size_t length, tc::RngState& rng);

// |STFT| magnitude grid [fft_size x frames x 1], rows ordered from -fs/2 up
// (frequency-shifted), shaped by the front-end response.
tc::Tensor stft_magnitude(const std::vector<std::complex<double>>& signal, const StftConfig& cfg,
                          const FrontEnd& fe = {});

sp::GridSample gen_spectrogram(const SceneSpec& spec, tc::RngState& rng, const StftConfig& cfg = {},
                               const FrontEnd& fe = {});

}  // namespace wavesfm::sim
