#include <doctest.h>

#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "test_util.hpp"
#include "wavesfm/wavesim/dataset.hpp"

using namespace wavesfm;
using sim::cplx;
using tc::Tensor;

namespace {

std::size_t column_argmax(const Tensor& g, std::size_t col) {
  const std::size_t H = g.dim(0), W = g.dim(1);
  std::size_t best = 0;
  for (std::size_t r = 1; r < H; ++r) {
    if (g.at(r * W + col) > g.at(best * W + col)) best = r;
  }
  return best;
}

// Channel restricted to the pilot symbols, laid out like ls_estimate output.
sim::CsiGrid pilot_rows(const sim::CsiGrid& h, const std::vector<std::size_t>& pilots) {
  sim::CsiGrid out(h.antennas, pilots.size(), h.subcarriers);
  for (std::size_t a = 0; a < h.antennas; ++a) {
    for (std::size_t p = 0; p < pilots.size(); ++p) {
      for (std::size_t k = 0; k < h.subcarriers; ++k) out(a, p, k) = h(a, pilots[p], k);
    }
  }
  return out;
}

// Dominant non-DC frequency (Hz) of a real series by direct DFT.
double peak_frequency(const std::vector<double>& x, double rate) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::size_t best = 1;
  double best_mag = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    cplx acc{};
    for (std::size_t t = 0; t < n; ++t) {
      acc += (x[t] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  return static_cast<double>(best) * rate / static_cast<double>(n);
}

// Chance accuracy plus five binomial standard deviations over `n` test samples.
double above_chance(std::size_t classes, std::size_t n) {
  const double p = 1.0 / static_cast<double>(classes);
  return p + 5.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

double nearest_centroid_accuracy(const sp::Archive& a, std::size_t classes) {
  const std::size_t n = a.samples.size(), half = n / 2, dim = a.samples[0].data.numel();
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < half; ++i) {
    const auto& s = a.samples[i];
    const auto y = static_cast<std::size_t>(*s.label);
    for (std::size_t d = 0; d < dim; ++d) centroid[y][d] += s.data.at(d);
    ++count[y];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (auto& v : centroid[c]) v /= static_cast<double>(std::max<std::size_t>(count[c], 1));
  }
  std::size_t correct = 0;
  for (std::size_t i = half; i < n; ++i) {
    const auto& s = a.samples[i];
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) d2 += (s.data.at(d) - centroid[c][d]) * (s.data.at(d) - centroid[c][d]);
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    correct += best == static_cast<std::size_t>(*s.label);
  }
  return static_cast<double>(correct) / static_cast<double>(n - half);
}

}  // namespace

TEST_CASE("spectrogram scenes") {
  sim::StftConfig stft{256, 64, 64, 1};
  SUBCASE("pure tone occupies one row") {
    tc::RngState rng(1);
    sim::SceneSpec s;
    s.kind = sim::SignalKind::kTone;
    s.snr_db = 30.0;
    const auto g = sim::gen_spectrogram(s, rng, stft);
    CHECK(g.data.shape() == tc::Shape{256, 64, 1});
    const std::size_t row = column_argmax(g.data, 0);
    for (std::size_t c = 1; c < 64; ++c) CHECK(column_argmax(g.data, c) == row);
  }
  SUBCASE("linear chirp rises across columns") {
    tc::RngState rng(2);
    sim::SceneSpec s;
    s.kind = sim::SignalKind::kChirp;
    s.snr_db = 30.0;
    const auto g = sim::gen_spectrogram(s, rng, stft);
    for (std::size_t c = 1; c < 64; ++c) CHECK(column_argmax(g.data, c) >= column_argmax(g.data, c - 1));
    CHECK(column_argmax(g.data, 63) > column_argmax(g.data, 0) + 64);
  }
  SUBCASE("noise alone has no persistent outlier") {
    tc::RngState rng(3);
    sim::SceneSpec s;
    s.kind = sim::SignalKind::kNoise;
    const auto g = sim::gen_spectrogram(s, rng, stft);
    const auto d = g.data.data();
    double mean = 0.0, var = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    for (double v : d) var += (v - mean) * (v - mean);
    const double thr = mean + 6.0 * std::sqrt(var / static_cast<double>(d.size()));
    for (std::size_t r = 0; r < 256; ++r) {
      int hits = 0;
      for (std::size_t c = 0; c < 64; ++c) hits += d[r * 64 + c] > thr;
      CHECK(hits <= 1);
    }
  }
  SUBCASE("twenty labelled classes") {
    for (int c = 0; c < sim::kSpectrogramClasses; ++c) CHECK(sim::scene_for_class(c, 10.0).class_id == c);
    CHECK_THROWS(sim::scene_for_class(sim::kSpectrogramClasses, 10.0));
  }
}

TEST_CASE("activity CSI") {
  tc::RngState rng(4);
  const sim::ActivityConfig cfg;
  const auto g = sim::gen_activity_csi(2, rng, cfg);
  CHECK(g.data.shape() == tc::Shape{114, cfg.frames, 3});
  CHECK(*g.label == 2);
  CHECK_THROWS(sim::gen_activity_csi(6, rng, cfg));

  // Averaged over subcarriers, the motion line sits at the class frequency.
  const auto series = [&](const sp::GridSample& s) {
    std::vector<double> x(cfg.frames, 0.0);
    for (std::size_t k = 0; k < 114; ++k) {
      for (std::size_t t = 0; t < cfg.frames; ++t) x[t] += s.data.at(sp::grid_index(cfg.frames, 3, k, t, 0));
    }
    return x;
  };
  const double resolution = cfg.frame_rate_hz / static_cast<double>(cfg.frames);
  sim::ActivityConfig clean = cfg;
  clean.noise_std = 0.0;
  std::vector<double> peaks;
  for (int c = 0; c < sim::kActivityClasses; ++c) {
    tc::RngState r(100 + c);
    const double f = peak_frequency(series(sim::gen_activity_csi(c, r, clean)), cfg.frame_rate_hz);
    CHECK(std::abs(f - sim::activity_profile(c).base_hz) <= 0.1 * sim::activity_profile(c).base_hz + resolution);
    peaks.push_back(f);
  }
  for (std::size_t c = 1; c < peaks.size(); ++c) CHECK(peaks[c] - peaks[c - 1] > resolution);

  tc::RngState a(5), b(5);
  const auto ga = sim::gen_activity_csi(3, a, cfg), gb = sim::gen_activity_csi(3, b, cfg);
  CHECK(std::equal(ga.data.data().begin(), ga.data.data().end(), gb.data.data().begin()));
}

TEST_CASE("positioning CSI") {
  sim::PositioningConfig cfg;
  SUBCASE("phase slope encodes the line-of-sight delay") {
    cfg.noise_std = 0.0;
    cfg.multipath = 0;
    tc::RngState rng(6);
    const sim::Vec3 pos = {7.0, 12.5, 1.5};
    const auto h = sim::positioning_csi(pos, cfg, rng);
    for (std::size_t b = 0; b < 4; ++b) {
      const auto& bs = cfg.base_stations[b];
      const double d = std::sqrt((pos[0] - bs[0]) * (pos[0] - bs[0]) + (pos[1] - bs[1]) * (pos[1] - bs[1]) +
                                 (pos[2] - bs[2]) * (pos[2] - bs[2]));
      const double expected = -2.0 * std::numbers::pi * cfg.subcarrier_spacing_hz * d / sim::kSpeedOfLight;
      double unwrapped = std::arg(h(b, 0, 0));
      double prev = unwrapped;
      for (std::size_t k = 1; k < cfg.subcarriers; ++k) {
        const double ph = std::arg(h(b, 0, k));
        double step = ph - prev;
        step -= 2.0 * std::numbers::pi * std::round(step / (2.0 * std::numbers::pi));
        unwrapped += step;
        prev = ph;
      }
      const double slope = (unwrapped - std::arg(h(b, 0, 0))) / static_cast<double>(cfg.subcarriers - 1);
      CHECK(std::abs(slope - expected) < 1e-6);
    }
  }
  SUBCASE("grid layout and distinct positions") {
    tc::RngState r1(7), r2(7);
    const auto a = sim::gen_positioning_sample({3.0, 4.0, 1.0}, cfg, r1);
    const auto b = sim::gen_positioning_sample({15.0, 9.0, 2.0}, cfg, r2);
    CHECK(a.data.shape() == tc::Shape{192, 14, 4});
    CHECK((*a.position)[0] == 3.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.data.numel(); ++i) diff += std::abs(a.data.at(i) - b.data.at(i));
    CHECK(diff > 1.0);
  }
  SUBCASE("positions outside the arena are rejected") {
    tc::RngState rng(8);
    CHECK_THROWS(sim::gen_positioning_sample({-1.0, 4.0, 1.0}, cfg, rng));
    CHECK_THROWS(sim::gen_positioning_sample({3.0, 4.0, 9.0}, cfg, rng));
    for (int i = 0; i < 100; ++i) CHECK(sim::inside_arena(sim::random_position(cfg, rng), cfg));
  }
}

TEST_CASE("MIMO-OFDM channel") {
  sim::OfdmConfig cfg;
  CHECK(cfg.doppler_hz() == doctest::Approx(35.0).epsilon(1e-12));
  CHECK(cfg.pilot_symbols == std::vector<std::size_t>{2, 11});

  SUBCASE("average channel power is one") {
    tc::RngState rng(9);
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i) acc += sim::gen_mimo_ofdm(cfg, rng).channel.h.mean_power();
    CHECK(std::abs(acc / 1000.0 - 1.0) < 0.02);
  }
  SUBCASE("noiseless pilots are H times the pilot") {
    tc::RngState rng(10);
    const auto d = sim::gen_mimo_ofdm_at(cfg, INFINITY, rng);
    for (std::size_t a = 0; a < cfg.n_rx_antennas; ++a) {
      for (std::size_t s = 0; s < cfg.n_symbols; ++s) {
        const bool pilot = s == 2 || s == 11;
        for (std::size_t k = 0; k < cfg.n_subcarriers; ++k) {
          if (pilot) {
            CHECK(d.rx(a, s, k) == d.channel.h(a, s, k) * d.tx_pilots(a, s, k));
            CHECK(std::abs(std::abs(d.tx_pilots(a, s, k)) - 1.0) < 1e-12);
          } else {
            CHECK(d.rx(a, s, k) == cplx{});
          }
        }
      }
    }
    const auto ls = sim::ls_estimate(d.tx_pilots, d.rx, cfg.pilot_symbols);
    CHECK(sim::grid_mse(ls, pilot_rows(d.channel.h, cfg.pilot_symbols)) < 1e-28);
  }
  SUBCASE("time correlation follows Jakes") {
    const auto R = sim::jakes_time_correlation(cfg);
    const double dt = cfg.symbol_duration_s();
    CHECK(R(0, 0) == doctest::Approx(1.0));
    CHECK(R(0, 9) == doctest::Approx(std::cyl_bessel_j(0.0, 2.0 * std::numbers::pi * 35.0 * 9.0 * dt)).epsilon(1e-12));
  }
  SUBCASE("draws are reproducible") {
    tc::RngState a(11), b(11);
    const auto da = sim::gen_mimo_ofdm(cfg, a), db = sim::gen_mimo_ofdm(cfg, b);
    CHECK(da.rx.v == db.rx.v);
    CHECK(da.channel.snr_db == db.channel.snr_db);
    CHECK(da.channel.snr_db >= -10.0);
    CHECK(da.channel.snr_db <= 20.0);
  }
}

TEST_CASE("least-squares estimation error matches the noise level") {
  sim::OfdmConfig cfg;
  for (double snr : {-10.0, 5.0, 20.0}) {
    tc::RngState rng(12);
    double acc = 0.0;
    const int draws = 300;
    for (int i = 0; i < draws; ++i) {
      const auto d = sim::gen_mimo_ofdm_at(cfg, snr, rng);
      acc += sim::grid_mse(sim::ls_estimate(d.tx_pilots, d.rx, cfg.pilot_symbols),
                           pilot_rows(d.channel.h, cfg.pilot_symbols));
    }
    CHECK(std::abs(acc / draws / sim::noise_variance(snr) - 1.0) < 0.05);
  }
  sim::CsiGrid tx(1, 14, 4), rx(1, 14, 4);
  CHECK_THROWS(sim::ls_estimate(tx, rx, {2, 11}));
}

TEST_CASE("pilot interpolation") {
  sim::CsiGrid p(1, 2, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    p(0, 0, k) = {1.0 + double(k), -1.0};
    p(0, 1, k) = {1.0 + double(k), -1.0};
  }
  const auto flat = sim::interpolate_pilots(p, {2, 11}, 14);
  CHECK(flat.symbols == 14);
  for (std::size_t s = 0; s < 14; ++s) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(flat(0, s, k) == p(0, 0, k));
  }
  for (std::size_t k = 0; k < 3; ++k) {
    p(0, 0, k) = {2.0, 0.0};
    p(0, 1, k) = {2.0 + 9.0 * double(k), 4.5};
  }
  const auto lin = sim::interpolate_pilots(p, {2, 11}, 14);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(lin(0, 2, k) == p(0, 0, k));
    CHECK(lin(0, 11, k) == p(0, 1, k));
    // Linear drift: symbol s sits at 2 + k (s - 2), 0.5 (s - 2) exactly.
    for (std::size_t s = 0; s < 14; ++s) {
      const double t = double(s) - 2.0;
      CHECK(std::abs(lin(0, s, k) - cplx{2.0 + double(k) * t, 0.5 * t}) < 1e-12);
    }
  }
  const auto mid = 0.5 * (lin(0, 6, 1) + lin(0, 7, 1));
  CHECK(std::abs(mid - 0.5 * (p(0, 0, 1) + p(0, 1, 1))) < 1e-12);
  sim::CsiGrid one(1, 1, 2);
  one(0, 0, 0) = {3.0, 1.0};
  CHECK(sim::interpolate_pilots(one, {5}, 14)(0, 13, 0) == cplx{3.0, 1.0});
}

TEST_CASE("LMMSE estimation") {
  sim::OfdmConfig cfg;
  tc::RngState cov_rng(13);
  const auto cov = sim::estimate_covariance(cfg, 2000, cov_rng);
  CHECK(cov.freq.rows() == 64);
  CHECK(cov.time.rows() == 14);
  CHECK(cov.freq.isApprox(cov.freq.adjoint(), 1e-12));

  SUBCASE("noiseless input passes through at the pilots") {
    tc::RngState rng(14);
    const auto d = sim::gen_mimo_ofdm_at(cfg, INFINITY, rng);
    const auto ls = sim::ls_estimate(d.tx_pilots, d.rx, cfg.pilot_symbols);
    const auto est = sim::lmmse_estimate(ls, cov, 0.0, cfg.pilot_symbols);
    CHECK(est.symbols == 14);
    CHECK(sim::grid_mse(pilot_rows(est, cfg.pilot_symbols), ls) < 1e-6 * ls.mean_power());
  }
  SUBCASE("white prior at high noise shrinks toward zero") {
    sim::ChannelCovariance white{Eigen::MatrixXcd::Identity(64, 64), Eigen::MatrixXcd::Identity(14, 14)};
    tc::RngState rng(15);
    const auto d = sim::gen_mimo_ofdm_at(cfg, -10.0, rng);
    const auto ls = sim::ls_estimate(d.tx_pilots, d.rx, cfg.pilot_symbols);
    const auto est = sim::lmmse_estimate(ls, white, 10.0, cfg.pilot_symbols);
    CHECK(pilot_rows(est, cfg.pilot_symbols).mean_power() < ls.mean_power() / 100.0);
  }
  SUBCASE("never worse than interpolated LS") {
    for (double snr : {-10.0, 0.0, 10.0, 20.0}) {
      tc::RngState rng(16);
      double ls_mse = 0.0, lm_mse = 0.0;
      for (int i = 0; i < 100; ++i) {
        const auto d = sim::gen_mimo_ofdm_at(cfg, snr, rng);
        const auto ls = sim::ls_estimate(d.tx_pilots, d.rx, cfg.pilot_symbols);
        ls_mse += sim::grid_mse(sim::interpolate_pilots(ls, cfg.pilot_symbols, 14), d.channel.h);
        lm_mse += sim::grid_mse(sim::lmmse_estimate(ls, cov, sim::noise_variance(snr), cfg.pilot_symbols), d.channel.h);
      }
      CHECK(lm_mse <= ls_mse);
    }
  }
}

TEST_CASE("channel-estimation packing") {
  sim::OfdmConfig cfg;
  tc::RngState rng(17);
  const auto d = sim::gen_mimo_ofdm_at(cfg, INFINITY, rng);
  const Tensor x = sim::pack_chanest_input(d.tx_pilots, d.rx);
  CHECK(x.shape() == tc::Shape{4 * 14, 64, 4});
  for (std::size_t r = 0; r < 56; ++r) {
    if (r % 14 == 2 || r % 14 == 11) continue;
    for (std::size_t k = 0; k < 64; ++k) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(x.at(sp::grid_index(64, 4, r, k, c)) == 0.0);
    }
  }
  const auto [tx, rx] = sim::unpack_chanest_input(x, 4);
  CHECK(tx.v == d.tx_pilots.v);
  CHECK(rx.v == d.rx.v);
  const auto ls = sim::ls_estimate(tx, rx, cfg.pilot_symbols);
  CHECK(sim::grid_mse(ls, pilot_rows(d.channel.h, cfg.pilot_symbols)) < 1e-28);

  const Tensor ht = sim::csi_to_tensor(d.channel.h);
  CHECK(ht.shape() == tc::Shape{56, 64, 2});
  CHECK(sim::tensor_to_csi(ht, 4).v == d.channel.h.v);

  tc::RngState r2(18);
  const auto s = sim::gen_chanest_sample(cfg, r2);
  CHECK(s.channels() == 4);
  CHECK(s.target.shape() == tc::Shape{56, 64, 2});
  CHECK(s.snr_db.has_value());
  CHECK(s.modality == sp::Modality::kOfdmGrid);
}

TEST_CASE("dataset generation") {
  sim::DatasetSpec spec;
  spec.stft = {64, 32, 32, 1};
  spec.count = 60;
  spec.classes = {0, 1, 2};
  const auto a = sim::generate_dataset(spec, 5, 1);
  const auto b = sim::generate_dataset(spec, 5, 2);
  REQUIRE(a.samples.size() == 60);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(*a.samples[i].label == static_cast<int>(i % 3));
    CHECK(std::equal(a.samples[i].data.data().begin(), a.samples[i].data.data().end(), b.samples[i].data.data().begin()));
  }
  CHECK(sim::dataset_spec_from_json(sim::to_json(spec)).count == 60);
  CHECK(sim::to_json(sim::dataset_spec_from_json(sim::to_json(spec))) == sim::to_json(spec));
  CHECK(a.generator.at("seed") == 5);
  CHECK(a.generator.at("count") == 60);
  spec.classes = {0, 25};
  CHECK_THROWS(spec.validate());
}

TEST_CASE("generated classes are separable by nearest centroid") {
  SUBCASE("spectrograms") {
    sim::DatasetSpec spec;
    spec.stft = {64, 32, 16, 1};
    spec.count = 1000;
    spec.gain_spread_db = 0.0;
    const auto a = sim::generate_dataset(spec, 21);
    const double acc = nearest_centroid_accuracy(a, spec.num_classes());
    MESSAGE("spectrogram nearest-centroid accuracy " << acc);
    CHECK(acc > above_chance(spec.num_classes(), 500));
  }
  SUBCASE("activity") {
    sim::DatasetSpec spec;
    spec.kind = sim::DatasetKind::kActivity;
    spec.count = 1000;
    spec.activity.frames = 32;
    const auto a = sim::generate_dataset(spec, 22);
    const double acc = nearest_centroid_accuracy(a, 6);
    MESSAGE("activity nearest-centroid accuracy " << acc);
    CHECK(acc > above_chance(6, 500));
  }
}
