#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "wavesfm/tensorcore/parameter_store.hpp"

namespace wavesfm::train {

struct OptimConfig {
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  // Skip decay on rank-1 tensors (layer-norm affine, biases, mask/class tokens).
  bool decay_matrices_only = true;
  std::size_t epochs = 800;
  std::size_t warmup_epochs = 40;
  double layer_decay = 1.0;
  double mask_ratio = 0.75;

  void validate() const;
};

OptimConfig pretrain_defaults();
OptimConfig finetune_defaults();

nlohmann::json to_json(const OptimConfig& c);
OptimConfig optim_config_from_json(const nlohmann::json& j, OptimConfig base);

// Linear warm-up from 0 to `base_lr` over `warmup_steps`, then half-cosine
// down to 0 at `total_steps`.
struct Schedule {
  double base_lr = 1e-3;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  double lr_at(std::size_t step) const;
};

Schedule make_schedule(const OptimConfig& cfg, std::size_t steps_per_epoch);

// Depth of a parameter for layer-wise decay: 0 for patch embedding and class
// token, l for encoder block l, blocks + 1 for everything after the encoder.
std::size_t layer_depth(const std::string& name, std::size_t encoder_blocks);
// decay^(K - min(depth, K)).
double layer_lr_scale(const std::string& name, std::size_t encoder_blocks, double decay);

// Adam with bias correction and decoupled weight decay.
class Adam {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit Adam(const OptimConfig& cfg = {}) : cfg_(cfg) {}

  // Updates every parameter with requires_grad set, using lr * lr_scale(name).
  // Throws tc::NumericError, leaving parameters untouched, if any gradient is
  // not finite.
  void step(tc::ParameterStore& params, double lr,
            const std::function<double(const std::string&)>& lr_scale = {});

  std::size_t steps() const { return t_; }
  const std::unordered_map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::size_t steps, std::unordered_map<std::string, Moments> moments) {
    t_ = steps;
    moments_ = std::move(moments);
  }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace wavesfm::train
