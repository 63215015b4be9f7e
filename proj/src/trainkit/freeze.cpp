#include "wavesfm/trainkit/freeze.hpp"

#include <stdexcept>

#include "wavesfm/trainkit/optim.hpp"

namespace wavesfm::train {

std::string_view freeze_mode_name(FreezeMode m) {
  switch (m) {
    case FreezeMode::kHeadOnly: return "head_only";
    case FreezeMode::kLastNBlocks: return "last_n_blocks";
    case FreezeMode::kLora: return "lora";
    case FreezeMode::kFull: return "full";
  }
  return "unknown";
}

FreezeMode parse_freeze_mode(std::string_view name) {
  for (FreezeMode m : {FreezeMode::kHeadOnly, FreezeMode::kLastNBlocks, FreezeMode::kLora, FreezeMode::kFull}) {
    if (freeze_mode_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown freeze mode: " + std::string(name));
}

nlohmann::json to_json(const FreezePolicy& p) {
  nlohmann::json j{{"mode", freeze_mode_name(p.mode)}};
  if (p.mode == FreezeMode::kLastNBlocks) j["last_n"] = p.last_n;
  if (p.mode == FreezeMode::kLora) j["lora"] = vit::to_json(p.lora);
  return j;
}

FreezePolicy freeze_policy_from_json(const nlohmann::json& j) {
  FreezePolicy p;
  p.mode = parse_freeze_mode(j.value("mode", std::string("head_only")));
  p.last_n = j.value("last_n", std::size_t{2});
  if (j.contains("lora")) p.lora = vit::lora_config_from_json(j.at("lora"));
  return p;
}

bool is_trainable(const std::string& name, const FreezePolicy& policy, std::size_t encoder_blocks) {
  if (name.rfind("decoder.", 0) == 0) return false;
  if (vit::is_head_param(name) || name == "encoder.cls_token") return true;
  switch (policy.mode) {
    case FreezeMode::kHeadOnly: return false;
    case FreezeMode::kFull: return !vit::is_lora_param(name);
    case FreezeMode::kLora: return vit::is_lora_param(name);
    case FreezeMode::kLastNBlocks: {
      if (policy.last_n > encoder_blocks) throw std::invalid_argument("last_n exceeds the encoder depth");
      if (name.rfind("encoder.block", 0) != 0) return false;
      const std::size_t depth = layer_depth(name, encoder_blocks);
      return depth + policy.last_n > encoder_blocks && !vit::is_lora_param(name);
    }
  }
  return false;
}

void apply_freeze(vit::WavesModel& model, const FreezePolicy& policy) {
  if (!model.head()) throw std::invalid_argument("apply_freeze: attach a task head first");
  if (policy.mode == FreezeMode::kLora && !model.lora()) {
    throw std::invalid_argument("apply_freeze: lora policy on a model without adapters");
  }
  if (policy.mode != FreezeMode::kLora && model.lora()) {
    throw std::invalid_argument("apply_freeze: model carries adapters but the policy is not lora");
  }
  const std::size_t k = model.config().encoder.blocks;
  for (auto& e : model.params()) e.tensor.set_requires_grad(is_trainable(e.name, policy, k));
}

SharingReport sharing_report(const vit::WavesModel& model) {
  SharingReport r;
  for (const auto& e : model.params()) {
    const std::size_t n = e.tensor.numel();
    if (e.name.rfind("decoder.", 0) == 0) continue;
    r.total += n;
    if (e.tensor.requires_grad()) r.trainable += n;
    if (e.name.rfind("encoder.", 0) == 0 && !vit::is_lora_param(e.name) && e.name != "encoder.cls_token") {
      r.backbone += n;
      if (!e.tensor.requires_grad()) r.backbone_frozen += n;
    }
  }
  return r;
}

}  // namespace wavesfm::train
