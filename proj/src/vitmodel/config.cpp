#include "wavesfm/vitmodel/config.hpp"

#include <stdexcept>
#include <string>

namespace wavesfm::vit {

std::string_view pooling_name(Pooling p) { return p == Pooling::kToken ? "token" : "avg"; }

Pooling parse_pooling(std::string_view name) {
  if (name == "token") return Pooling::kToken;
  if (name == "avg") return Pooling::kAvg;
  throw std::invalid_argument("unknown pooling mode: " + std::string(name));
}

std::string_view attention_scale_name(AttentionScale s) {
  return s == AttentionScale::kPerHead ? "per_head" : "model_dim";
}

AttentionScale parse_attention_scale(std::string_view name) {
  if (name == "per_head") return AttentionScale::kPerHead;
  if (name == "model_dim") return AttentionScale::kModelDim;
  throw std::invalid_argument("unknown attention_scale: " + std::string(name));
}

namespace {

void validate_tower(const TowerConfig& t, const char* which) {
  const std::string w(which);
  if (t.dim == 0 || t.hidden == 0 || t.heads == 0) throw std::invalid_argument(w + ": zero-sized tower");
  if (t.dim % t.heads != 0) throw std::invalid_argument(w + ": dim not divisible by heads");
  if (t.dim % 4 != 0) throw std::invalid_argument(w + ": dim must be divisible by 4 for 2-D position codes");
}

nlohmann::json tower_json(const TowerConfig& t) {
  return {{"blocks", t.blocks}, {"dim", t.dim}, {"hidden", t.hidden}, {"heads", t.heads}};
}

TowerConfig tower_from_json(const nlohmann::json& j, TowerConfig t) {
  t.blocks = j.value("blocks", t.blocks);
  t.dim = j.value("dim", t.dim);
  t.hidden = j.value("hidden", t.hidden);
  t.heads = j.value("heads", t.heads);
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (patch == 0 || image_size == 0 || channels == 0) throw std::invalid_argument("model: zero-sized geometry");
  if (image_size % patch != 0) throw std::invalid_argument("model: patch size must divide image_size");
  validate_tower(encoder, "encoder");
  validate_tower(decoder, "decoder");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"image_size", c.image_size},
          {"patch", c.patch},
          {"channels", c.channels},
          {"encoder", tower_json(c.encoder)},
          {"decoder", tower_json(c.decoder)},
          {"pooling", pooling_name(c.pooling)},
          {"attention_scale", attention_scale_name(c.attention_scale)},
          {"ln_eps", c.ln_eps},
          {"init_std", c.init_std}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  c.image_size = j.value("image_size", c.image_size);
  c.patch = j.value("patch", c.patch);
  c.channels = j.value("channels", c.channels);
  if (j.contains("encoder")) c.encoder = tower_from_json(j.at("encoder"), c.encoder);
  if (j.contains("decoder")) c.decoder = tower_from_json(j.at("decoder"), c.decoder);
  if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  if (j.contains("attention_scale")) c.attention_scale = parse_attention_scale(j.at("attention_scale").get<std::string>());
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.init_std = j.value("init_std", c.init_std);
  return c;
}

nlohmann::json to_json(const LoraConfig& c) {
  return {{"rank", c.rank}, {"alpha", c.alpha}, {"init_std", c.init_std}};
}

LoraConfig lora_config_from_json(const nlohmann::json& j, LoraConfig c) {
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  c.init_std = j.value("init_std", c.init_std);
  if (c.rank < 1) throw std::invalid_argument("lora: rank must be at least 1");
  return c;
}

}  // namespace wavesfm::vit
