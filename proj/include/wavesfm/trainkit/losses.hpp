#pragma once

#include <cstddef>
#include <vector>

#include "wavesfm/tensorcore/ops.hpp"
#include "wavesfm/tensorcore/rng.hpp"
#include "wavesfm/vitmodel/vit.hpp"

namespace wavesfm::train {

// Shuffle, keep the first N - floor(ratio * N) shuffled positions visible,
// then sort both halves back into grid order. Requires 0 <= ratio < 1.
vit::MaskPlan sample_mask(std::size_t n, double ratio, tc::RngState& rng);
std::size_t masked_count(std::size_t n, double ratio);

// Sum of squared patch distances divided by batch * |masked|. Per-sample
// callers pass the full batch size so that summing over samples yields the
// batch loss.
tc::Tensor mwm_loss(const tc::Tensor& targets, const tc::Tensor& recon, std::size_t batch);

// Probabilities below this are clamped before the log.
constexpr double kProbFloor = 1e-12;

// -(1/N) sum_n sum_i (y_i (1 - theta) + theta / C) log p_i.
tc::Tensor loss_sce(const tc::Tensor& probs, const std::vector<int>& labels, double theta,
                    std::size_t batch = 0);
// -(1/N) sum_n beta_{y_n} log p_{y_n}.
tc::Tensor loss_wce(const tc::Tensor& probs, const std::vector<int>& labels, const std::vector<double>& beta,
                    std::size_t batch = 0);
// (1/N) sum_n |r_hat - r|^2 over [N x 3] rows.
tc::Tensor loss_mse_position(const tc::Tensor& pred, const tc::Tensor& target, std::size_t batch = 0);

// beta_i = N_total / (C * N_i); classes absent from `labels` get weight 0.
std::vector<double> inverse_frequency_weights(const std::vector<int>& labels, std::size_t classes);

struct SnrWeightConfig {
  double gain = 10.6;
  double rate = 0.226;
  double offset = 0.764;
  double floor = 0.01;
};

// gain * exp(rate * snr_db) - offset, clamped below at `floor`.
double snr_weight(double snr_db, const SnrWeightConfig& cfg = {});
// Raw printed formula without the clamp; used to document where it turns negative.
double snr_weight_unclamped(double snr_db, const SnrWeightConfig& cfg = {});

// (1/N) sum_n w(SNR_n) |h_n - h_hat_n|^2 with h flattened (Re/Im as reals).
tc::Tensor loss_snr_mse(const std::vector<tc::Tensor>& pred, const std::vector<tc::Tensor>& target,
                        const std::vector<double>& snr_db, const SnrWeightConfig& cfg = {}, std::size_t batch = 0);

}  // namespace wavesfm::train
