#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wavesfm/signalpipe/augment.hpp"
#include "wavesfm/trainkit/freeze.hpp"
#include "wavesfm/trainkit/optim.hpp"
#include "wavesfm/trainkit/trainer.hpp"
#include "wavesfm/vitmodel/config.hpp"
#include "wavesfm/vitmodel/vit.hpp"
#include "wavesfm/wavesim/dataset.hpp"

namespace wavesfm::eval {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Stage { kPretrain, kFinetune, kEvaluate, kSimulate };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct DataConfig {
  // Sample archive to read; when empty the dataset is generated from `spec`.
  std::string archive;
  sim::DatasetSpec spec;
  std::uint64_t seed = 1;
  // Trailing fraction of the samples held out for validation.
  double val_fraction = 0.2;
};

struct TaskConfig {
  vit::TaskKind kind = vit::TaskKind::kSensing;
  // Head width; 0 derives it from the data (class count or 3 for positions).
  std::size_t outputs = 0;
  train::TaskLossConfig loss;
};

struct EvalConfig {
  std::size_t covariance_draws = 10000;
  double snr_lo_db = -10.0;
  double snr_hi_db = 20.0;
  double snr_step_db = 5.0;
  std::size_t histogram_bins = 20;
};

// Defaults mirror the full-scale configuration: the 38M/7M model, batch 256,
// lr 1e-3, weight decay 0.05, 800/40 pre-training or 200/10 fine-tuning
// epochs with layer decay 0.75, mask ratio 0.75.
struct ExperimentConfig {
  Stage stage = Stage::kPretrain;
  std::uint64_t seed = 0;
  std::size_t runs = 3;   // fine-tuning repeats with seeds seed, seed+1, ...
  std::string out_dir = "runs/out";
  // Pre-training: resume from; fine-tuning: backbone to start from;
  // evaluation: fine-tuned checkpoint to score.
  std::string init_checkpoint;
  std::size_t checkpoint_every = 10;
  bool dump_preds = false;
  DataConfig data;
  vit::ModelConfig model;
  train::OptimConfig optim = train::pretrain_defaults();
  train::FreezePolicy freeze;
  TaskConfig task;
  sp::AugmentPolicy augment;   // pre-training only; crop size follows the model
  EvalConfig eval;

  // Throws ConfigError on inconsistent settings or missing paths.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys take the defaults of the given stage; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunOptions {
  std::size_t threads = 0;   // evaluation workers; 0 = worker_threads()
  std::function<void(const std::string&)> log;
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  nlohmann::json report;
};

// Executes the configured stage. Writes into out_dir:
//   metrics.jsonl   one record per epoch
//   epochs.csv      the same records as a table
//   report.json     final report
//   checkpoints/    epoch-NNNN every checkpoint_every epochs, and final
//   confusion.csv | position_errors.csv | mse_vs_snr.csv   per task
//   predictions.jsonl (+ preds/ grids)   with dump_preds
// Simulation writes archive/ instead. Invalid configurations return
// kExitConfig and numeric divergence kExitDiverged, leaving the last saved
// checkpoint in place.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace wavesfm::eval
