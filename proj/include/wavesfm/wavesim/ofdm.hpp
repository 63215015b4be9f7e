#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/tensorcore/rng.hpp"

namespace wavesfm::sim {

using cplx = std::complex<double>;

constexpr double kSpeedOfLight = 3.0e8;

struct OfdmConfig {
  std::size_t n_subcarriers = 64;
  std::size_t n_symbols = 14;
  std::vector<std::size_t> pilot_symbols = {2, 11};
  std::size_t n_rx_antennas = 4;
  double subcarrier_spacing_hz = 30e3;
  double carrier_hz = 3.5e9;
  double speed_mps = 3.0;
  double snr_min_db = -10.0;
  double snr_max_db = 20.0;
  double rms_delay_spread_s = 300e-9;
  std::size_t n_taps = 8;
  double spatial_corr = 0.5;           // exponential model rho^|i-j| across antennas
  double cyclic_prefix_fraction = 0.07;
  std::uint64_t pilot_seed = 0x5EED;   // pilots are shared by every sample

  void validate() const;
  double doppler_hz() const { return speed_mps * carrier_hz / kSpeedOfLight; }
  double symbol_duration_s() const { return (1.0 + cyclic_prefix_fraction) / subcarrier_spacing_hz; }
  double sample_period_s() const { return 1.0 / (static_cast<double>(n_subcarriers) * subcarrier_spacing_hz); }
};

nlohmann::json to_json(const OfdmConfig& c);
OfdmConfig ofdm_config_from_json(const nlohmann::json& j, OfdmConfig base = {});

// Complex grid indexed [antenna][symbol][subcarrier].
struct CsiGrid {
  std::size_t antennas = 0, symbols = 0, subcarriers = 0;
  std::vector<cplx> v;

  CsiGrid() = default;
  CsiGrid(std::size_t a, std::size_t s, std::size_t k) : antennas(a), symbols(s), subcarriers(k), v(a * s * k) {}
  cplx& operator()(std::size_t a, std::size_t s, std::size_t k) { return v[(a * symbols + s) * subcarriers + k]; }
  const cplx& operator()(std::size_t a, std::size_t s, std::size_t k) const {
    return v[(a * symbols + s) * subcarriers + k];
  }
  std::size_t size() const { return v.size(); }
  double mean_power() const;
};

struct ChannelRealization {
  CsiGrid h;
  std::vector<double> tap_powers;   // exponential PDP, sums to 1
  std::vector<double> tap_delays_s;
  double doppler_hz = 0.0;
  double snr_db = 0.0;
};

struct OfdmDraw {
  CsiGrid tx_pilots;   // pilot cells hold the known symbol, other cells zero
  CsiGrid rx;          // received pilots; non-pilot cells zero
  ChannelRealization channel;
};

// Fixed unit-modulus QPSK pilot grid for `cfg`.
CsiGrid pilot_grid(const OfdmConfig& cfg);

// Jakes time correlation over the symbol grid, J0(2 pi f_d |i-j| T_sym).
Eigen::MatrixXd jakes_time_correlation(const OfdmConfig& cfg);

// Draw with SNR sampled uniformly in dB over the configured range.
OfdmDraw gen_mimo_ofdm(const OfdmConfig& cfg, tc::RngState& rng);
// Draw at a fixed SNR; +infinity gives noiseless pilots.
OfdmDraw gen_mimo_ofdm_at(const OfdmConfig& cfg, double snr_db, tc::RngState& rng);

// Per-pilot-symbol LS estimate [antennas x pilots x subcarriers].
CsiGrid ls_estimate(const CsiGrid& tx_pilots, const CsiGrid& rx, const std::vector<std::size_t>& pilot_symbols);

// Linear interpolation / extrapolation in symbol index from pilot rows.
CsiGrid interpolate_pilots(const CsiGrid& pilot_csi, const std::vector<std::size_t>& pilot_symbols,
                           std::size_t n_symbols);

struct ChannelCovariance {
  Eigen::MatrixXcd freq;   // [K x K]
  Eigen::MatrixXcd time;   // [S x S]
};

// Empirical covariances from `draws` simulator realizations.
ChannelCovariance estimate_covariance(const OfdmConfig& cfg, std::size_t draws, tc::RngState& rng);

constexpr double kLmmseRegularization = 1e-9;

// Frequency smoothing R_f (R_f + s2 I)^-1 on each pilot symbol, then time
// interpolation with the pilot/data cross-covariance of R_t. The time stage
// treats the residual error of the frequency stage as its noise level.
CsiGrid lmmse_estimate(const CsiGrid& ls, const ChannelCovariance& cov, double noise_var,
                       const std::vector<std::size_t>& pilot_symbols);

double noise_variance(double snr_db);
double grid_mse(const CsiGrid& a, const CsiGrid& b);

// Chanest network input [antennas*symbols x subcarriers x 4] with channels
// (Re rx, Im rx, Re tx, Im tx), antennas stacked along the height.
tc::Tensor pack_chanest_input(const CsiGrid& tx_pilots, const CsiGrid& rx);
// Inverse of pack_chanest_input.
std::pair<CsiGrid, CsiGrid> unpack_chanest_input(const tc::Tensor& packed, std::size_t antennas);

// Channel as a real grid [antennas*symbols x subcarriers x 2] (Re, Im), and back.
tc::Tensor csi_to_tensor(const CsiGrid& h);
CsiGrid tensor_to_csi(const tc::Tensor& t, std::size_t antennas);

// Full sample: packed input, channel target, SNR metadata. No pre-processing.
sp::GridSample gen_chanest_sample(const OfdmConfig& cfg, tc::RngState& rng, OfdmDraw* draw_out = nullptr);

}  // namespace wavesfm::sim
