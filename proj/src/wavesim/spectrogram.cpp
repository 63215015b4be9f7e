#include "wavesfm/wavesim/spectrogram.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace wavesfm::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW planning is not thread-safe.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

std::complex<double> unit_phasor(double phase) { return {std::cos(phase), std::sin(phase)}; }

}  // namespace

std::string_view signal_kind_name(SignalKind k) {
  switch (k) {
    case SignalKind::kTone: return "tone";
    case SignalKind::kChirp: return "chirp";
    case SignalKind::kOfdmBurst: return "ofdm-burst";
    case SignalKind::kFmLike: return "fm-like";
    case SignalKind::kHopper: return "hopper";
    case SignalKind::kNoise: return "noise";
  }
  return "unknown";
}

SceneSpec scene_for_class(int class_id, double snr_db) {
  if (class_id < 0 || class_id >= kSpectrogramClasses) {
    throw std::invalid_argument("spectrogram class out of range: " + std::to_string(class_id));
  }
  static constexpr SignalKind kKinds[] = {SignalKind::kTone,   SignalKind::kChirp,  SignalKind::kOfdmBurst,
                                          SignalKind::kFmLike, SignalKind::kHopper, SignalKind::kNoise};
  SceneSpec spec;
  spec.class_id = class_id;
  spec.snr_db = snr_db;
  if (class_id < 6) {
    spec.kind = kKinds[class_id];
    return spec;
  }
  const int variant = class_id - 6;
  spec.kind = kKinds[variant % 5];
  static constexpr OccupancyBox kBands[] = {{-0.45, -0.15, 0.0, 1.0}, {-0.15, 0.15, 0.0, 1.0}, {0.15, 0.45, 0.0, 1.0}};
  spec.box = kBands[variant / 5];
  return spec;
}

std::vector<std::complex<double>> synthesize_baseband(const SceneSpec& spec, std::size_t length, tc::RngState& rng) {
  std::vector<std::complex<double>> x(length);
  const double noise_std = std::sqrt(0.5);
  const double amp = std::sqrt(std::pow(10.0, spec.snr_db / 10.0));
  const auto& box = spec.box;
  const double bw = box.f_hi - box.f_lo;
  const auto on = [&](std::size_t n) {
    const double t = static_cast<double>(n) / static_cast<double>(length);
    return t >= box.t_lo && t < box.t_hi;
  };

  switch (spec.kind) {
    case SignalKind::kTone: {
      const double f = rng.uniform(box.f_lo + 0.05 * bw, box.f_hi - 0.05 * bw);
      const double phase0 = rng.uniform(0.0, kTwoPi);
      for (std::size_t n = 0; n < length; ++n) {
        if (on(n)) x[n] = amp * unit_phasor(phase0 + kTwoPi * f * static_cast<double>(n));
      }
      break;
    }
    case SignalKind::kChirp: {
      // Rising sweep over at least half the band.
      const double f0 = rng.uniform(box.f_lo, box.f_lo + 0.25 * bw);
      const double f1 = rng.uniform(box.f_hi - 0.25 * bw, box.f_hi);
      const double rate = (f1 - f0) / static_cast<double>(length);
      double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t n = 0; n < length; ++n) {
        const double f = f0 + rate * static_cast<double>(n);
        if (on(n)) x[n] = amp * unit_phasor(phase);
        phase += kTwoPi * f;
      }
      break;
    }
    case SignalKind::kOfdmBurst: {
      // QPSK on 16 tones spread over most of the band, bursty in time.
      const std::size_t tones = 16;
      const double center = 0.5 * (box.f_lo + box.f_hi);
      const double span = rng.uniform(0.5, 0.8) * bw;
      const double t0 = rng.uniform(0.0, 0.3), t1 = rng.uniform(0.6, 1.0);
      const std::size_t symbol = 128;
      std::vector<std::complex<double>> sym(tones);
      for (std::size_t n = 0; n < length; ++n) {
        if (n % symbol == 0) {
          for (auto& s : sym) {
            s = unit_phasor(std::numbers::pi / 4.0 + std::numbers::pi / 2.0 * static_cast<double>(rng.uniform_int(4)));
          }
        }
        const double t = static_cast<double>(n) / static_cast<double>(length);
        if (!on(n) || t < t0 || t > t1) continue;
        std::complex<double> acc = 0.0;
        for (std::size_t k = 0; k < tones; ++k) {
          const double f = center - 0.5 * span + span * static_cast<double>(k) / static_cast<double>(tones - 1);
          acc += sym[k] * unit_phasor(kTwoPi * f * static_cast<double>(n));
        }
        x[n] = amp * acc / std::sqrt(static_cast<double>(tones));
      }
      break;
    }
    case SignalKind::kFmLike: {
      const double fc = rng.uniform(box.f_lo + 0.4 * bw, box.f_hi - 0.4 * bw);
      const double dev = rng.uniform(0.2, 0.3) * bw;
      const double fm = rng.uniform(3.0, 6.0) / static_cast<double>(length);
      double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t n = 0; n < length; ++n) {
        if (on(n)) x[n] = amp * unit_phasor(phase);
        phase += kTwoPi * (fc + dev * std::sin(kTwoPi * fm * static_cast<double>(n)));
      }
      break;
    }
    case SignalKind::kHopper: {
      const std::size_t dwell = length / 8;
      double f = 0.0, phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t n = 0; n < length; ++n) {
        if (n % dwell == 0) f = rng.uniform(box.f_lo, box.f_hi);
        if (on(n)) x[n] = amp * unit_phasor(phase);
        phase += kTwoPi * f;
      }
      break;
    }
    case SignalKind::kNoise: break;
  }
  for (auto& v : x) v += std::complex<double>(rng.normal(0.0, noise_std), rng.normal(0.0, noise_std));
  return x;
}

double FrontEnd::response(double f) const {
  const double a = std::abs(f);
  if (a <= edge_start || edge_start >= 0.5) return 1.0;
  const double t = std::min(1.0, (a - edge_start) / (0.5 - edge_start));
  const double floor = std::pow(10.0, edge_floor_db / 20.0);
  return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

tc::Tensor stft_magnitude(const std::vector<std::complex<double>>& signal, const StftConfig& cfg, const FrontEnd& fe) {
  if (cfg.fft_size < 2 || cfg.hop == 0 || cfg.frames == 0 || cfg.average == 0) throw std::invalid_argument("stft: bad geometry");
  if (signal.size() < cfg.signal_length()) throw std::invalid_argument("stft: signal shorter than frames require");
  const std::size_t n = cfg.fft_size;
  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
  }

  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan plan;
  {
    std::lock_guard lock(plan_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  std::vector<double> out(n * cfg.frames);
  for (std::size_t w = 0; w < cfg.windows(); ++w) {
    const std::size_t start = w * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) {
      buf[i][0] = signal[start + i].real() * window[i];
      buf[i][1] = signal[start + i].imag() * window[i];
    }
    fftw_execute(plan);
    const std::size_t f = w / cfg.average;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = (k + n / 2) % n;  // bin k lands on row k + n/2
      out[row * cfg.frames + f] += buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
    }
  }
  for (std::size_t row = 0; row < n; ++row) {
    const double f = (static_cast<double>(row) - static_cast<double>(n / 2)) / static_cast<double>(n);
    const double h = fe.response(f);
    for (std::size_t c = 0; c < cfg.frames; ++c) {
      double& v = out[row * cfg.frames + c];
      v = h * std::sqrt(v / static_cast<double>(cfg.average));
    }
  }
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return tc::Tensor::from({n, cfg.frames, 1}, std::move(out));
}

sp::GridSample gen_spectrogram(const SceneSpec& spec, tc::RngState& rng, const StftConfig& cfg, const FrontEnd& fe) {
  sp::GridSample s;
  auto x = synthesize_baseband(spec, cfg.signal_length(), rng);
  if (spec.gain_db != 0.0) {
    const double g = std::pow(10.0, spec.gain_db / 20.0);
    for (auto& v : x) v *= g;
  }
  s.data = stft_magnitude(x, cfg, fe);
  s.modality = sp::Modality::kSpectrogram;
  s.label = spec.class_id;
  s.snr_db = spec.snr_db;
  return s;
}

}  // namespace wavesfm::sim
