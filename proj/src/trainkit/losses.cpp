#include "wavesfm/trainkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wavesfm::train {

using tc::Tensor;

std::size_t masked_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

vit::MaskPlan sample_mask(std::size_t n, double ratio, tc::RngState& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1)");
  if (n == 0) throw std::invalid_argument("cannot mask an empty patch sequence");
  vit::MaskPlan plan;
  plan.ratio = ratio;
  plan.order = rng.permutation(n);
  const std::size_t keep = n - masked_count(n, ratio);
  plan.visible.assign(plan.order.begin(), plan.order.begin() + static_cast<std::ptrdiff_t>(keep));
  plan.masked.assign(plan.order.begin() + static_cast<std::ptrdiff_t>(keep), plan.order.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

Tensor mwm_loss(const Tensor& targets, const Tensor& recon, std::size_t batch) {
  if (targets.shape() != recon.shape()) {
    throw tc::ShapeError("mwm_loss: targets " + tc::shape_str(targets.shape()) + " vs reconstruction " +
                         tc::shape_str(recon.shape()));
  }
  if (batch == 0) throw std::invalid_argument("mwm_loss: batch size must be positive");
  const double denom = static_cast<double>(batch) * static_cast<double>(targets.dim(0));
  return tc::scale(tc::sum(tc::square(tc::sub(targets, recon))), 1.0 / denom);
}

namespace {

void check_probs(const Tensor& probs, const std::vector<int>& labels, const char* where) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
    throw tc::ShapeError(std::string(where) + ": one probability row per label required");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= probs.dim(1)) {
      throw std::invalid_argument(std::string(where) + ": label " + std::to_string(y) + " out of range");
    }
  }
}

double batch_denominator(std::size_t batch, std::size_t rows) {
  return static_cast<double>(batch == 0 ? rows : batch);
}

}  // namespace

Tensor loss_sce(const Tensor& probs, const std::vector<int>& labels, double theta, std::size_t batch) {
  check_probs(probs, labels, "loss_sce");
  if (!(theta >= 0.0 && theta < 1.0)) throw std::invalid_argument("loss_sce: smoothing must lie in [0, 1)");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  std::vector<double> weights(n * c, theta / static_cast<double>(c));
  for (std::size_t i = 0; i < n; ++i) weights[i * c + static_cast<std::size_t>(labels[i])] += 1.0 - theta;
  const Tensor w = Tensor::from({n, c}, std::move(weights));
  return tc::scale(tc::sum(tc::mul(w, tc::log_clamped(probs, kProbFloor))), -1.0 / batch_denominator(batch, n));
}

Tensor loss_wce(const Tensor& probs, const std::vector<int>& labels, const std::vector<double>& beta,
                std::size_t batch) {
  check_probs(probs, labels, "loss_wce");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (beta.size() != c) throw tc::ShapeError("loss_wce: one weight per class required");
  std::vector<double> weights(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (beta[y] < 0.0) throw std::invalid_argument("loss_wce: negative class weight");
    weights[i * c + y] = beta[y];
  }
  const Tensor w = Tensor::from({n, c}, std::move(weights));
  return tc::scale(tc::sum(tc::mul(w, tc::log_clamped(probs, kProbFloor))), -1.0 / batch_denominator(batch, n));
}

Tensor loss_mse_position(const Tensor& pred, const Tensor& target, std::size_t batch) {
  if (pred.shape() != target.shape()) throw tc::ShapeError("loss_mse_position: shape mismatch");
  return tc::scale(tc::sum(tc::square(tc::sub(pred, target))), 1.0 / batch_denominator(batch, pred.dim(0)));
}

std::vector<double> inverse_frequency_weights(const std::vector<int>& labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw std::invalid_argument("label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> beta(classes, 0.0);
  for (std::size_t i = 0; i < classes; ++i) {
    if (counts[i] > 0) {
      beta[i] = static_cast<double>(labels.size()) / (static_cast<double>(classes) * static_cast<double>(counts[i]));
    }
  }
  return beta;
}

double snr_weight_unclamped(double snr_db, const SnrWeightConfig& cfg) {
  return cfg.gain * std::exp(cfg.rate * snr_db) - cfg.offset;
}

double snr_weight(double snr_db, const SnrWeightConfig& cfg) {
  return std::max(snr_weight_unclamped(snr_db, cfg), cfg.floor);
}

Tensor loss_snr_mse(const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                    const std::vector<double>& snr_db, const SnrWeightConfig& cfg, std::size_t batch) {
  if (pred.size() != target.size()) throw tc::ShapeError("loss_snr_mse: prediction/target count mismatch");
  if (snr_db.size() != pred.size()) throw std::invalid_argument("loss_snr_mse: missing per-sample SNR");
  if (pred.empty()) throw std::invalid_argument("loss_snr_mse: empty batch");
  const double inv = 1.0 / batch_denominator(batch, pred.size());
  Tensor total;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    if (pred[n].numel() != target[n].numel()) throw tc::ShapeError("loss_snr_mse: grid size mismatch");
    const Tensor diff = tc::sub(tc::reshape(pred[n], {pred[n].numel()}), tc::reshape(target[n], {target[n].numel()}));
    const Tensor term = tc::scale(tc::sum(tc::square(diff)), snr_weight(snr_db[n], cfg) * inv);
    total = total.defined() ? tc::add(total, term) : term;
  }
  return total;
}

}  // namespace wavesfm::train
