#include "wavesfm/wavesim/sensing.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace wavesfm::sim {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}
}  // namespace

ActivityProfile activity_profile(int class_id) {
  static constexpr ActivityProfile kProfiles[kActivityClasses] = {
      {4.0, 0.10, 0.05, 0.02},  {10.0, 0.20, 0.05, 0.04}, {18.0, 0.30, 0.05, 0.05},
      {28.0, 0.40, 0.04, 0.06}, {40.0, 0.50, 0.04, 0.08}, {55.0, 0.60, 0.03, 0.10}};
  if (class_id < 0 || class_id >= kActivityClasses) {
    throw std::invalid_argument("activity class out of range: " + std::to_string(class_id));
  }
  return kProfiles[class_id];
}

sp::GridSample gen_activity_csi(int class_id, tc::RngState& rng, const ActivityConfig& cfg) {
  const auto prof = activity_profile(class_id);
  const std::size_t K = cfg.subcarriers, T = cfg.frames, C = cfg.antennas;

  std::vector<double> out(K * T * C);
  for (std::size_t c = 0; c < C; ++c) {
    // Static multipath floor: smooth across subcarriers.
    const std::size_t paths = 4;
    std::vector<double> delay(paths), gain(paths), phase(paths);
    for (std::size_t p = 0; p < paths; ++p) {
      delay[p] = rng.uniform(0.0, 3.0 / static_cast<double>(K));
      gain[p] = rng.uniform(0.3, 1.0);
      phase[p] = rng.uniform(0.0, kTwoPi);
    }
    std::vector<double> floor(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t p = 0; p < paths; ++p) {
        acc += gain[p] * std::polar(1.0, phase[p] - kTwoPi * delay[p] * static_cast<double>(k));
      }
      floor[k] = 0.5 + std::abs(acc) / static_cast<double>(paths);
    }
    const double f = prof.base_hz * (1.0 + rng.normal(0.0, prof.freq_jitter));
    const double depth = std::max(0.0, prof.depth + rng.normal(0.0, prof.depth_jitter));
    const double phi0 = rng.uniform(0.0, kTwoPi);
    const double phi_slope = rng.uniform(-0.05, 0.05);
    for (std::size_t k = 0; k < K; ++k) {
      const double phi = phi0 + phi_slope * static_cast<double>(k);
      for (std::size_t t = 0; t < T; ++t) {
        const double tt = static_cast<double>(t) / cfg.frame_rate_hz;
        const double v = floor[k] * (1.0 + depth * std::sin(kTwoPi * f * tt + phi)) + rng.normal(0.0, cfg.noise_std);
        out[sp::grid_index(T, C, k, t, c)] = v;
      }
    }
  }
  sp::GridSample s;
  s.data = tc::Tensor::from({K, T, C}, std::move(out));
  s.modality = sp::Modality::kCsi;
  s.label = class_id;
  return s;
}

bool inside_arena(const Vec3& pos, const PositioningConfig& cfg) {
  for (int i = 0; i < 3; ++i) {
    if (!(pos[i] >= cfg.arena_min[i] && pos[i] <= cfg.arena_max[i])) return false;
  }
  return true;
}

Vec3 random_position(const PositioningConfig& cfg, tc::RngState& rng) {
  Vec3 p;
  for (int i = 0; i < 3; ++i) p[i] = rng.uniform(cfg.arena_min[i], cfg.arena_max[i]);
  return p;
}

CsiGrid positioning_csi(const Vec3& pos, const PositioningConfig& cfg, tc::RngState& rng) {
  if (!inside_arena(pos, cfg)) throw std::invalid_argument("positioning: position outside the arena");
  if (cfg.base_stations.empty()) throw std::invalid_argument("positioning: no base stations");
  const std::size_t B = cfg.base_stations.size(), S = cfg.symbols, K = cfg.subcarriers;
  CsiGrid h(B, S, K);
  for (std::size_t b = 0; b < B; ++b) {
    const double tau = distance(pos, cfg.base_stations[b]) / kSpeedOfLight;
    std::vector<double> extra(cfg.multipath);
    std::vector<std::complex<double>> amp(cfg.multipath);
    for (std::size_t m = 0; m < cfg.multipath; ++m) {
      extra[m] = rng.uniform(0.0, cfg.max_excess_delay_s);
      const double g = std::sqrt(cfg.multipath_power / static_cast<double>(cfg.multipath) / 2.0);
      amp[m] = {rng.normal(0.0, g), rng.normal(0.0, g)};
    }
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        const double fk = static_cast<double>(k) * cfg.subcarrier_spacing_hz;
        std::complex<double> v = std::polar(1.0, -kTwoPi * fk * tau);
        for (std::size_t m = 0; m < cfg.multipath; ++m) v += amp[m] * std::polar(1.0, -kTwoPi * fk * (tau + extra[m]));
        if (cfg.noise_std > 0.0) v += std::complex<double>(rng.normal(0.0, cfg.noise_std), rng.normal(0.0, cfg.noise_std));
        h(b, s, k) = v;
      }
    }
  }
  return h;
}

sp::GridSample gen_positioning_sample(const Vec3& pos, const PositioningConfig& cfg, tc::RngState& rng) {
  const CsiGrid h = positioning_csi(pos, cfg, rng);
  const std::size_t B = h.antennas, S = h.symbols, K = h.subcarriers;
  std::vector<double> out(K * S * B);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) out[sp::grid_index(S, B, k, s, b)] = h(b, s, k).real();
    }
  }
  sp::GridSample g;
  g.data = tc::Tensor::from({K, S, B}, std::move(out));
  g.modality = sp::Modality::kCsi;
  g.position = pos;
  return g;
}

}  // namespace wavesfm::sim
