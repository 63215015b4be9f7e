#include "wavesfm/trainkit/optim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wavesfm::train {

void OptimConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("optim: batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("optim: epochs must be positive");
  if (warmup_epochs >= epochs) throw std::invalid_argument("optim: warm-up must be shorter than training");
  if (!(layer_decay > 0.0 && layer_decay <= 1.0)) throw std::invalid_argument("optim: layer_decay must lie in (0, 1]");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("optim: mask_ratio must lie in [0, 1)");
  if (lr < 0.0 || weight_decay < 0.0) throw std::invalid_argument("optim: negative lr or weight decay");
}

OptimConfig pretrain_defaults() {
  OptimConfig c;
  c.epochs = 800;
  c.warmup_epochs = 40;
  c.layer_decay = 1.0;
  c.mask_ratio = 0.75;
  return c;
}

OptimConfig finetune_defaults() {
  OptimConfig c;
  c.epochs = 200;
  c.warmup_epochs = 10;
  c.layer_decay = 0.75;
  c.mask_ratio = 0.0;
  return c;
}

nlohmann::json to_json(const OptimConfig& c) {
  return {{"batch_size", c.batch_size}, {"lr", c.lr},
          {"beta1", c.beta1},           {"beta2", c.beta2},
          {"eps", c.eps},               {"weight_decay", c.weight_decay},
          {"decay_matrices_only", c.decay_matrices_only},
          {"epochs", c.epochs},         {"warmup_epochs", c.warmup_epochs},
          {"layer_decay", c.layer_decay}, {"mask_ratio", c.mask_ratio}};
}

OptimConfig optim_config_from_json(const nlohmann::json& j, OptimConfig c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.decay_matrices_only = j.value("decay_matrices_only", c.decay_matrices_only);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.layer_decay = j.value("layer_decay", c.layer_decay);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  return c;
}

double Schedule::lr_at(std::size_t step) const {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Schedule make_schedule(const OptimConfig& cfg, std::size_t steps_per_epoch) {
  Schedule s;
  s.base_lr = cfg.lr;
  s.warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  s.total_steps = std::max<std::size_t>(cfg.epochs * steps_per_epoch, s.warmup_steps + 1);
  return s;
}

std::size_t layer_depth(const std::string& name, std::size_t encoder_blocks) {
  if (name == "encoder.patch_embed" || name == "encoder.cls_token") return 0;
  const std::string prefix = "encoder.block";
  if (name.rfind(prefix, 0) == 0) {
    std::size_t pos = prefix.size();
    std::size_t depth = 0;
    while (pos < name.size() && std::isdigit(static_cast<unsigned char>(name[pos]))) {
      depth = depth * 10 + static_cast<std::size_t>(name[pos] - '0');
      ++pos;
    }
    return depth;
  }
  return encoder_blocks + 1;
}

double layer_lr_scale(const std::string& name, std::size_t encoder_blocks, double decay) {
  const std::size_t depth = std::min(layer_depth(name, encoder_blocks), encoder_blocks);
  return std::pow(decay, static_cast<double>(encoder_blocks - depth));
}

void Adam::step(tc::ParameterStore& params, double lr, const std::function<double(const std::string&)>& lr_scale) {
  for (const auto& e : params) {
    if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw tc::NumericError("adam: non-finite gradient in " + e.name + "; step aborted");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& e : params) {
    if (!e.tensor.requires_grad()) continue;
    const double step_lr = lr * (lr_scale ? lr_scale(e.name) : 1.0);
    auto value = e.tensor.mutable_data();
    const bool decays = cfg_.weight_decay > 0.0 && (!cfg_.decay_matrices_only || e.tensor.rank() >= 2);
    if (decays) {
      const double shrink = 1.0 - step_lr * cfg_.weight_decay;
      for (auto& p : value) p *= shrink;
    }
    if (!e.tensor.has_grad()) continue;
    auto grad = e.tensor.grad();
    auto& mom = moments_[e.name];
    if (mom.m.size() != value.size()) {
      mom.m.assign(value.size(), 0.0);
      mom.v.assign(value.size(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * grad[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      value[i] -= step_lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace wavesfm::train
