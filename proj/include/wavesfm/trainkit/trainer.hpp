#pragma once

#include <cstddef>
#include <vector>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/signalpipe/patch.hpp"
#include "wavesfm/trainkit/freeze.hpp"
#include "wavesfm/trainkit/losses.hpp"
#include "wavesfm/trainkit/optim.hpp"
#include "wavesfm/vitmodel/vit.hpp"

namespace wavesfm::train {

struct TaskLossConfig {
  double smoothing = 0.1;              // label smoothing for sensing
  std::vector<double> class_weights;   // WCE weights; empty means all ones
  SnrWeightConfig snr;
};

// Optimizer, schedule and step counter owned by one training run.
struct TrainState {
  OptimConfig optim;
  Schedule schedule;
  Adam adam;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

TrainState make_train_state(const OptimConfig& cfg, std::size_t dataset_size);
std::size_t steps_per_epoch(const OptimConfig& cfg, std::size_t dataset_size);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;     // mean of batch losses
  double lr = 0.0;       // base learning rate of the last step
  std::size_t steps = 0;
  std::vector<double> batch_losses;
};

// One pass over `data` (already pre-processed and patchified) in a shuffled
// order. Each batch draws an independent mask per sample, accumulates
// per-sample gradients of loss / |B| in order, then takes one Adam step.
EpochMetrics pretrain_epoch(const std::vector<sp::PatchSeq>& data, vit::WavesModel& model, TrainState& state,
                            tc::RngState& rng);

// Mean masked-reconstruction loss over `data` with masks drawn from `rng`.
double pretrain_eval_loss(const std::vector<sp::PatchSeq>& data, const vit::WavesModel& model, double mask_ratio,
                          tc::RngState& rng);

// Per-sample task loss (already divided by `batch`) for a prediction from
// WavesModel::task_forward.
tc::Tensor task_loss(const vit::TaskHeadSpec& head, const tc::Tensor& output, const sp::GridSample& sample,
                     const TaskLossConfig& cfg, std::size_t batch);

// Applies `policy`, then one pass of fine-tuning with layer-wise lr decay.
EpochMetrics finetune_epoch(const std::vector<sp::GridSample>& data, vit::WavesModel& model,
                            const FreezePolicy& policy, const TaskLossConfig& loss, TrainState& state,
                            tc::RngState& rng);

// Inference output for one pre-processed sample: class probabilities [C],
// position [3], or CSI grid [H x W x 2].
tc::Tensor task_predict(const vit::WavesModel& model, const sp::GridSample& sample);

}  // namespace wavesfm::train
