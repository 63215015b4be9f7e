#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "wavesfm/tensorcore/parameter_store.hpp"
#include "wavesfm/trainkit/trainer.hpp"
#include "wavesfm/vitmodel/vit.hpp"

namespace wavesfm::eval {

// Unreadable, truncated or tampered checkpoint directory.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const vit::TaskHeadSpec& h);
vit::TaskHeadSpec head_spec_from_json(const nlohmann::json& j);

// Layout: <dir>/manifest.json plus one float64 WFM1 file per parameter under
// params/ and per Adam moment under moments/. The manifest records names,
// shapes and an FNV-1a checksum of every tensor.
struct Checkpoint {
  vit::ModelConfig model;
  std::optional<vit::TaskHeadSpec> head;
  std::optional<vit::LoraConfig> lora;
  tc::ParameterStore params;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t adam_steps = 0;
  std::unordered_map<std::string, train::Adam::Moments> moments;
  nlohmann::json extra = nlohmann::json::object();
};

// Writes into a sibling temporary directory first, then replaces `dir`, so a
// failed save leaves the previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& dir, const vit::WavesModel& model,
                     const train::TrainState* state = nullptr,
                     const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rebuilds the model for `expected` and copies the stored values in. Throws
// tc::ShapeError naming the first tensor whose shape disagrees, or that is
// missing or unexpected.
vit::WavesModel restore_model(const Checkpoint& ckpt, const vit::ModelConfig& expected);

// Puts the stored optimizer moments and counters back into `state`.
void restore_train_state(const Checkpoint& ckpt, train::TrainState& state);

}  // namespace wavesfm::eval
