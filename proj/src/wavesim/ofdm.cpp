#include "wavesfm/wavesim/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Symmetric square root factor L with L L^T = R, robust to rank deficiency.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

cplx complex_normal(tc::RngState& rng, double var) {
  const double s = std::sqrt(var / 2.0);
  return {rng.normal(0.0, s), rng.normal(0.0, s)};
}

void check_pilots(const std::vector<std::size_t>& pilots, std::size_t n_symbols) {
  if (pilots.empty()) throw std::invalid_argument("at least one pilot symbol is required");
  for (std::size_t i = 0; i < pilots.size(); ++i) {
    if (pilots[i] >= n_symbols) throw std::invalid_argument("pilot symbol index out of range");
    if (i > 0 && pilots[i] <= pilots[i - 1]) throw std::invalid_argument("pilot symbols must be strictly increasing");
  }
}

}  // namespace

void OfdmConfig::validate() const {
  if (n_subcarriers == 0 || n_symbols == 0) throw std::invalid_argument("ofdm: empty resource grid");
  if (n_rx_antennas < 1) throw std::invalid_argument("ofdm: at least one antenna is required");
  check_pilots(pilot_symbols, n_symbols);
  if (n_taps == 0 || n_taps > n_subcarriers) throw std::invalid_argument("ofdm: n_taps must lie in [1, n_subcarriers]");
  if (!(rms_delay_spread_s > 0.0)) throw std::invalid_argument("ofdm: rms delay spread must be positive");
  if (!(spatial_corr >= 0.0 && spatial_corr < 1.0)) throw std::invalid_argument("ofdm: spatial_corr must lie in [0, 1)");
  if (snr_min_db > snr_max_db) throw std::invalid_argument("ofdm: empty SNR range");
  if (!(subcarrier_spacing_hz > 0.0 && carrier_hz > 0.0) || speed_mps < 0.0) {
    throw std::invalid_argument("ofdm: bad physical parameters");
  }
}

nlohmann::json to_json(const OfdmConfig& c) {
  return {{"n_subcarriers", c.n_subcarriers},
          {"n_symbols", c.n_symbols},
          {"pilot_symbols", c.pilot_symbols},
          {"n_rx_antennas", c.n_rx_antennas},
          {"subcarrier_spacing_hz", c.subcarrier_spacing_hz},
          {"carrier_hz", c.carrier_hz},
          {"speed_mps", c.speed_mps},
          {"snr_min_db", c.snr_min_db},
          {"snr_max_db", c.snr_max_db},
          {"rms_delay_spread_s", c.rms_delay_spread_s},
          {"n_taps", c.n_taps},
          {"spatial_corr", c.spatial_corr},
          {"cyclic_prefix_fraction", c.cyclic_prefix_fraction},
          {"pilot_seed", c.pilot_seed}};
}

OfdmConfig ofdm_config_from_json(const nlohmann::json& j, OfdmConfig c) {
  c.n_subcarriers = j.value("n_subcarriers", c.n_subcarriers);
  c.n_symbols = j.value("n_symbols", c.n_symbols);
  c.pilot_symbols = j.value("pilot_symbols", c.pilot_symbols);
  c.n_rx_antennas = j.value("n_rx_antennas", c.n_rx_antennas);
  c.subcarrier_spacing_hz = j.value("subcarrier_spacing_hz", c.subcarrier_spacing_hz);
  c.carrier_hz = j.value("carrier_hz", c.carrier_hz);
  c.speed_mps = j.value("speed_mps", c.speed_mps);
  c.snr_min_db = j.value("snr_min_db", c.snr_min_db);
  c.snr_max_db = j.value("snr_max_db", c.snr_max_db);
  c.rms_delay_spread_s = j.value("rms_delay_spread_s", c.rms_delay_spread_s);
  c.n_taps = j.value("n_taps", c.n_taps);
  c.spatial_corr = j.value("spatial_corr", c.spatial_corr);
  c.cyclic_prefix_fraction = j.value("cyclic_prefix_fraction", c.cyclic_prefix_fraction);
  c.pilot_seed = j.value("pilot_seed", c.pilot_seed);
  return c;
}

double CsiGrid::mean_power() const {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& x : v) acc += std::norm(x);
  return acc / static_cast<double>(v.size());
}

CsiGrid pilot_grid(const OfdmConfig& cfg) {
  tc::RngState rng(cfg.pilot_seed, 0x9170);
  CsiGrid p(cfg.n_rx_antennas, cfg.n_symbols, cfg.n_subcarriers);
  for (std::size_t s : cfg.pilot_symbols) {
    for (std::size_t k = 0; k < cfg.n_subcarriers; ++k) {
      const double phase = std::numbers::pi / 4.0 + std::numbers::pi / 2.0 * static_cast<double>(rng.uniform_int(4));
      const cplx sym{std::cos(phase), std::sin(phase)};
      for (std::size_t a = 0; a < cfg.n_rx_antennas; ++a) p(a, s, k) = sym;
    }
  }
  return p;
}

Eigen::MatrixXd jakes_time_correlation(const OfdmConfig& cfg) {
  const std::size_t s = cfg.n_symbols;
  Eigen::MatrixXd r(s, s);
  const double w = kTwoPi * cfg.doppler_hz() * cfg.symbol_duration_s();
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double gap = std::abs(static_cast<double>(i) - static_cast<double>(j));
      r(i, j) = std::cyl_bessel_j(0.0, w * gap);
    }
  }
  return r;
}

OfdmDraw gen_mimo_ofdm(const OfdmConfig& cfg, tc::RngState& rng) {
  const double snr = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
  return gen_mimo_ofdm_at(cfg, snr, rng);
}

OfdmDraw gen_mimo_ofdm_at(const OfdmConfig& cfg, double snr_db, tc::RngState& rng) {
  cfg.validate();
  const std::size_t A = cfg.n_rx_antennas, S = cfg.n_symbols, K = cfg.n_subcarriers, L = cfg.n_taps;

  OfdmDraw d;
  auto& ch = d.channel;
  ch.snr_db = snr_db;
  ch.doppler_hz = cfg.doppler_hz();
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double tau = static_cast<double>(l) * cfg.sample_period_s();
    ch.tap_delays_s.push_back(tau);
    ch.tap_powers.push_back(std::exp(-tau / cfg.rms_delay_spread_s));
    total += ch.tap_powers.back();
  }
  for (auto& p : ch.tap_powers) p /= total;

  const Eigen::MatrixXd lt = psd_factor(jakes_time_correlation(cfg));
  Eigen::MatrixXd rs(A, A);
  for (std::size_t i = 0; i < A; ++i) {
    for (std::size_t j = 0; j < A; ++j) {
      rs(i, j) = std::pow(cfg.spatial_corr, std::abs(static_cast<double>(i) - static_cast<double>(j)));
    }
  }
  const Eigen::MatrixXd ls = psd_factor(rs);

  // Tap gains per (antenna, symbol): G_l = Ls W Lt^T with W i.i.d. CN(0, p_l).
  std::vector<Eigen::MatrixXcd> taps(L);
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXcd w(A, S);
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t s = 0; s < S; ++s) w(a, s) = complex_normal(rng, ch.tap_powers[l]);
    }
    taps[l] = ls.cast<cplx>() * w * lt.transpose().cast<cplx>();
  }

  ch.h = CsiGrid(A, S, K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < L; ++l) {
      const double ph = -kTwoPi * static_cast<double>(k * l % K) / static_cast<double>(K);
      const cplx rot{std::cos(ph), std::sin(ph)};
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t s = 0; s < S; ++s) ch.h(a, s, k) += taps[l](a, s) * rot;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(ch.h.mean_power());
  for (auto& x : ch.h.v) x *= scale;

  d.tx_pilots = pilot_grid(cfg);
  d.rx = CsiGrid(A, S, K);
  const double nv = noise_variance(snr_db);
  for (std::size_t s : cfg.pilot_symbols) {
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t k = 0; k < K; ++k) {
        d.rx(a, s, k) = ch.h(a, s, k) * d.tx_pilots(a, s, k);
        if (nv > 0.0) d.rx(a, s, k) += complex_normal(rng, nv);
      }
    }
  }
  return d;
}

double noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

CsiGrid ls_estimate(const CsiGrid& tx, const CsiGrid& rx, const std::vector<std::size_t>& pilots) {
  if (tx.antennas != rx.antennas || tx.symbols != rx.symbols || tx.subcarriers != rx.subcarriers) {
    throw std::invalid_argument("ls_estimate: tx/rx grid mismatch");
  }
  check_pilots(pilots, tx.symbols);
  CsiGrid out(tx.antennas, pilots.size(), tx.subcarriers);
  for (std::size_t a = 0; a < tx.antennas; ++a) {
    for (std::size_t p = 0; p < pilots.size(); ++p) {
      for (std::size_t k = 0; k < tx.subcarriers; ++k) {
        const cplx t = tx(a, pilots[p], k);
        if (t == cplx{}) throw std::invalid_argument("ls_estimate: zero pilot");
        out(a, p, k) = rx(a, pilots[p], k) / t;
      }
    }
  }
  return out;
}

CsiGrid interpolate_pilots(const CsiGrid& pc, const std::vector<std::size_t>& pilots, std::size_t n_symbols) {
  check_pilots(pilots, n_symbols);
  if (pc.symbols != pilots.size()) throw std::invalid_argument("interpolate_pilots: pilot count mismatch");
  CsiGrid out(pc.antennas, n_symbols, pc.subcarriers);
  for (std::size_t s = 0; s < n_symbols; ++s) {
    std::size_t lo = 0, hi = 0;
    double t = 0.0;
    if (pilots.size() > 1) {
      // Segment containing s; the end segments extend outward.
      std::size_t seg = 0;
      while (seg + 2 < pilots.size() && s > pilots[seg + 1]) ++seg;
      lo = seg;
      hi = seg + 1;
      t = (static_cast<double>(s) - static_cast<double>(pilots[lo])) /
          (static_cast<double>(pilots[hi]) - static_cast<double>(pilots[lo]));
    }
    for (std::size_t a = 0; a < pc.antennas; ++a) {
      for (std::size_t k = 0; k < pc.subcarriers; ++k) {
        out(a, s, k) = pc(a, lo, k) + t * (pc(a, hi, k) - pc(a, lo, k));
      }
    }
  }
  return out;
}

ChannelCovariance estimate_covariance(const OfdmConfig& cfg, std::size_t draws, tc::RngState& rng) {
  if (draws == 0) throw std::invalid_argument("estimate_covariance: zero draws");
  const std::size_t A = cfg.n_rx_antennas, S = cfg.n_symbols, K = cfg.n_subcarriers;
  ChannelCovariance cov{Eigen::MatrixXcd::Zero(K, K), Eigen::MatrixXcd::Zero(S, S)};
  Eigen::MatrixXcd xf(K, A * S), xt(S, A * K);
  for (std::size_t n = 0; n < draws; ++n) {
    const auto h = gen_mimo_ofdm_at(cfg, std::numeric_limits<double>::infinity(), rng).channel.h;
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < K; ++k) {
          xf(k, a * S + s) = h(a, s, k);
          xt(s, a * K + k) = h(a, s, k);
        }
      }
    }
    cov.freq.noalias() += xf * xf.adjoint();
    cov.time.noalias() += xt * xt.adjoint();
  }
  cov.freq /= static_cast<double>(draws * A * S);
  cov.time /= static_cast<double>(draws * A * K);
  return cov;
}

CsiGrid lmmse_estimate(const CsiGrid& ls, const ChannelCovariance& cov, double noise_var,
                       const std::vector<std::size_t>& pilots) {
  const std::size_t A = ls.antennas, P = ls.symbols, K = ls.subcarriers;
  const std::size_t S = static_cast<std::size_t>(cov.time.rows());
  if (static_cast<std::size_t>(cov.freq.rows()) != K || cov.freq.cols() != cov.freq.rows() ||
      cov.time.cols() != cov.time.rows()) {
    throw std::invalid_argument("lmmse_estimate: covariance shape mismatch");
  }
  check_pilots(pilots, S);
  if (pilots.size() != P) throw std::invalid_argument("lmmse_estimate: pilot count mismatch");
  if (noise_var < 0.0) throw std::invalid_argument("lmmse_estimate: negative noise variance");

  const Eigen::MatrixXcd& rf = cov.freq;
  const Eigen::MatrixXcd id_k = Eigen::MatrixXcd::Identity(K, K);
  Eigen::MatrixXcd sys_f = rf + (noise_var + kLmmseRegularization) * id_k;
  // W_f = R_f (R_f + s2 I)^-1, computed as (sys_f^H \ R_f^H)^H.
  const Eigen::MatrixXcd wf = sys_f.adjoint().ldlt().solve(rf.adjoint()).adjoint();
  const double residual = std::max(0.0, (rf - wf * rf).trace().real() / static_cast<double>(K));

  Eigen::MatrixXcd rpp(P, P), rsp(S, P);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) rpp(i, j) = cov.time(pilots[i], pilots[j]);
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t j = 0; j < P; ++j) rsp(s, j) = cov.time(s, pilots[j]);
  }
  const Eigen::MatrixXcd sys_t = rpp + (residual + kLmmseRegularization) * Eigen::MatrixXcd::Identity(P, P);
  const Eigen::MatrixXcd wt = sys_t.adjoint().ldlt().solve(rsp.adjoint()).adjoint();

  CsiGrid out(A, S, K);
  Eigen::MatrixXcd hp(K, P);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t k = 0; k < K; ++k) hp(k, p) = ls(a, p, k);
    }
    const Eigen::MatrixXcd full = (wf * hp) * wt.transpose();  // [K x S]
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) out(a, s, k) = full(k, s);
    }
  }
  return out;
}

double grid_mse(const CsiGrid& a, const CsiGrid& b) {
  if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("grid_mse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a.v[i] - b.v[i]);
  return acc / static_cast<double>(a.size());
}

tc::Tensor pack_chanest_input(const CsiGrid& tx, const CsiGrid& rx) {
  if (tx.antennas != rx.antennas || tx.symbols != rx.symbols || tx.subcarriers != rx.subcarriers) {
    throw std::invalid_argument("pack_chanest_input: tx/rx grid mismatch");
  }
  const std::size_t H = tx.antennas * tx.symbols, W = tx.subcarriers;
  std::vector<double> out(H * W * 4);
  for (std::size_t a = 0; a < tx.antennas; ++a) {
    for (std::size_t s = 0; s < tx.symbols; ++s) {
      const std::size_t row = a * tx.symbols + s;
      for (std::size_t k = 0; k < W; ++k) {
        double* px = &out[sp::grid_index(W, 4, row, k, 0)];
        px[0] = rx(a, s, k).real();
        px[1] = rx(a, s, k).imag();
        px[2] = tx(a, s, k).real();
        px[3] = tx(a, s, k).imag();
      }
    }
  }
  return tc::Tensor::from({H, W, 4}, std::move(out));
}

std::pair<CsiGrid, CsiGrid> unpack_chanest_input(const tc::Tensor& packed, std::size_t antennas) {
  sp::check_grid(packed, "unpack_chanest_input");
  if (packed.dim(2) != 4 || antennas == 0 || packed.dim(0) % antennas != 0) {
    throw tc::ShapeError("unpack_chanest_input: expected [A*S x K x 4]");
  }
  const std::size_t S = packed.dim(0) / antennas, K = packed.dim(1);
  CsiGrid tx(antennas, S, K), rx(antennas, S, K);
  const auto d = packed.data();
  for (std::size_t a = 0; a < antennas; ++a) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        const double* px = &d[sp::grid_index(K, 4, a * S + s, k, 0)];
        rx(a, s, k) = {px[0], px[1]};
        tx(a, s, k) = {px[2], px[3]};
      }
    }
  }
  return {tx, rx};
}

tc::Tensor csi_to_tensor(const CsiGrid& h) {
  const std::size_t H = h.antennas * h.symbols, W = h.subcarriers;
  std::vector<double> out(H * W * 2);
  for (std::size_t a = 0; a < h.antennas; ++a) {
    for (std::size_t s = 0; s < h.symbols; ++s) {
      for (std::size_t k = 0; k < W; ++k) {
        const std::size_t i = sp::grid_index(W, 2, a * h.symbols + s, k, 0);
        out[i] = h(a, s, k).real();
        out[i + 1] = h(a, s, k).imag();
      }
    }
  }
  return tc::Tensor::from({H, W, 2}, std::move(out));
}

CsiGrid tensor_to_csi(const tc::Tensor& t, std::size_t antennas) {
  sp::check_grid(t, "tensor_to_csi");
  if (t.dim(2) != 2 || antennas == 0 || t.dim(0) % antennas != 0) {
    throw tc::ShapeError("tensor_to_csi: expected [A*S x K x 2]");
  }
  const std::size_t S = t.dim(0) / antennas, K = t.dim(1);
  CsiGrid h(antennas, S, K);
  const auto d = t.data();
  for (std::size_t a = 0; a < antennas; ++a) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i = sp::grid_index(K, 2, a * S + s, k, 0);
        h(a, s, k) = {d[i], d[i + 1]};
      }
    }
  }
  return h;
}

sp::GridSample gen_chanest_sample(const OfdmConfig& cfg, tc::RngState& rng, OfdmDraw* draw_out) {
  OfdmDraw d = gen_mimo_ofdm(cfg, rng);
  sp::GridSample s;
  s.data = pack_chanest_input(d.tx_pilots, d.rx);
  s.modality = sp::Modality::kOfdmGrid;
  s.snr_db = d.channel.snr_db;
  s.target = csi_to_tensor(d.channel.h);
  if (draw_out) *draw_out = std::move(d);
  return s;
}

}  // namespace wavesfm::sim
