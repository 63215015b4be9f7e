#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wavesfm/vitmodel/vit.hpp"

namespace wavesfm::train {

enum class FreezeMode { kHeadOnly, kLastNBlocks, kLora, kFull };

struct FreezePolicy {
  FreezeMode mode = FreezeMode::kHeadOnly;
  std::size_t last_n = 2;      // kLastNBlocks
  vit::LoraConfig lora;        // kLora

  static FreezePolicy head_only() { return {FreezeMode::kHeadOnly, 0, {}}; }
  static FreezePolicy last_n_blocks(std::size_t n) { return {FreezeMode::kLastNBlocks, n, {}}; }
  static FreezePolicy with_lora(vit::LoraConfig cfg) { return {FreezeMode::kLora, 0, cfg}; }
  static FreezePolicy full() { return {FreezeMode::kFull, 0, {}}; }
};

std::string_view freeze_mode_name(FreezeMode m);
FreezeMode parse_freeze_mode(std::string_view name);
nlohmann::json to_json(const FreezePolicy& p);
FreezePolicy freeze_policy_from_json(const nlohmann::json& j);

// True when `policy` lets the named parameter train.
bool is_trainable(const std::string& name, const FreezePolicy& policy, std::size_t encoder_blocks);

// Sets requires_grad on every parameter of `model` according to the policy.
// The model must already carry a head (and adapters for kLora).
void apply_freeze(vit::WavesModel& model, const FreezePolicy& policy);

struct SharingReport {
  std::size_t total = 0;            // all parameters including head/adapters
  std::size_t trainable = 0;
  std::size_t backbone = 0;         // encoder parameters excluding adapters
  std::size_t backbone_frozen = 0;

  double trainable_fraction() const { return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
  // Fraction of the pre-trained encoder that stays shared across tasks.
  double shared_fraction() const {
    return backbone ? static_cast<double>(backbone_frozen) / static_cast<double>(backbone) : 0.0;
  }
};

SharingReport sharing_report(const vit::WavesModel& model);

}  // namespace wavesfm::train
