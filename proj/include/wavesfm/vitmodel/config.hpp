#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include <json.hpp>

namespace wavesfm::vit {

struct TowerConfig {
  std::size_t blocks = 12;
  std::size_t dim = 512;
  std::size_t hidden = 2048;
  std::size_t heads = 8;
};

enum class Pooling { kToken, kAvg };
// kPerHead divides scores by sqrt(dim / heads); kModelDim by sqrt(dim).
enum class AttentionScale { kPerHead, kModelDim };

std::string_view pooling_name(Pooling p);
Pooling parse_pooling(std::string_view name);
std::string_view attention_scale_name(AttentionScale s);
AttentionScale parse_attention_scale(std::string_view name);

// Defaults are the 38M-encoder / 7M-decoder configuration.
struct ModelConfig {
  std::size_t image_size = 224;
  std::size_t patch = 16;
  std::size_t channels = 3;
  TowerConfig encoder{12, 512, 2048, 8};
  TowerConfig decoder{8, 256, 1024, 16};
  Pooling pooling = Pooling::kToken;
  AttentionScale attention_scale = AttentionScale::kPerHead;
  double ln_eps = 1e-6;
  double init_std = 0.02;

  std::size_t grid() const { return image_size / patch; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch * patch * channels; }

  // Throws std::invalid_argument on inconsistent geometry.
  void validate() const;
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 1.0;
  double init_std = 0.02;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::json to_json(const LoraConfig& c);
LoraConfig lora_config_from_json(const nlohmann::json& j, LoraConfig base = {});

}  // namespace wavesfm::vit
