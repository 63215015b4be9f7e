#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <json.hpp>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/tensorcore/rng.hpp"
#include "wavesfm/wavesim/ofdm.hpp"

namespace wavesfm::sim {

// Human-activity CSI: amplitude grid [subcarriers x frames x antennas].
struct ActivityConfig {
  std::size_t subcarriers = 114;
  std::size_t frames = 128;
  std::size_t antennas = 3;
  double frame_rate_hz = 500.0;
  double noise_std = 0.02;
};

constexpr int kActivityClasses = 6;

// Per-class body-motion modulation: base frequency (Hz), depth and the
// spread of both across draws.
struct ActivityProfile {
  double base_hz;
  double depth;
  double freq_jitter;
  double depth_jitter;
};
ActivityProfile activity_profile(int class_id);

sp::GridSample gen_activity_csi(int class_id, tc::RngState& rng, const ActivityConfig& cfg = {});

using Vec3 = std::array<double, 3>;

struct PositioningConfig {
  std::size_t subcarriers = 192;
  std::size_t symbols = 14;
  double subcarrier_spacing_hz = 30e3;
  Vec3 arena_min = {0.0, 0.0, 0.0};
  Vec3 arena_max = {20.0, 20.0, 3.0};
  std::vector<Vec3> base_stations = {{0.0, 0.0, 6.0}, {20.0, 0.0, 6.0}, {0.0, 20.0, 6.0}, {20.0, 20.0, 6.0}};
  std::size_t multipath = 3;          // scattered paths per link besides LOS
  double multipath_power = 0.1;       // total scattered power relative to LOS
  double max_excess_delay_s = 200e-9;
  double noise_std = 0.01;
};

bool inside_arena(const Vec3& pos, const PositioningConfig& cfg);
Vec3 random_position(const PositioningConfig& cfg, tc::RngState& rng);

// Complex per-BS response, indexed [bs][symbol][subcarrier].
CsiGrid positioning_csi(const Vec3& pos, const PositioningConfig& cfg, tc::RngState& rng);

// Real part of positioning_csi laid out [subcarriers x symbols x bs].
sp::GridSample gen_positioning_sample(const Vec3& pos, const PositioningConfig& cfg, tc::RngState& rng);

}  // namespace wavesfm::sim
