#include "wavesfm/trainkit/trainer.hpp"

#include <algorithm>
#include <stdexcept>

namespace wavesfm::train {

using tc::Tensor;

std::size_t steps_per_epoch(const OptimConfig& cfg, std::size_t dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("empty training set");
  return (dataset_size + cfg.batch_size - 1) / cfg.batch_size;
}

TrainState make_train_state(const OptimConfig& cfg, std::size_t dataset_size) {
  cfg.validate();
  TrainState s;
  s.optim = cfg;
  s.schedule = make_schedule(cfg, steps_per_epoch(cfg, dataset_size));
  s.adam = Adam(cfg);
  return s;
}

namespace {

template <typename SampleLoss>
EpochMetrics run_epoch(std::size_t n, vit::WavesModel& model, TrainState& state, tc::RngState& rng,
                       const std::function<double(const std::string&)>& lr_scale, SampleLoss&& sample_loss) {
  EpochMetrics m;
  m.epoch = state.epoch;
  const auto order = rng.permutation(n);
  const std::size_t batch = state.optim.batch_size;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    model.params().zero_grad();
    double batch_loss = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const Tensor loss = sample_loss(order[i], end - start);
      batch_loss += loss.item();
      tc::backward(loss);
    }
    const double lr = state.schedule.lr_at(state.step);
    state.adam.step(model.params(), lr, lr_scale);
    ++state.step;
    m.lr = lr;
    m.batch_losses.push_back(batch_loss);
  }
  m.steps = m.batch_losses.size();
  double total = 0.0;
  for (double l : m.batch_losses) total += l;
  m.loss = total / static_cast<double>(m.steps);
  ++state.epoch;
  return m;
}

Tensor masked_targets(const sp::PatchSeq& patches, const vit::MaskPlan& plan) {
  return tc::gather_rows(patches.patches, plan.masked);
}

}  // namespace

EpochMetrics pretrain_epoch(const std::vector<sp::PatchSeq>& data, vit::WavesModel& model, TrainState& state,
                            tc::RngState& rng) {
  if (!model.has_decoder()) throw std::logic_error("pretrain_epoch: model has no decoder");
  if (model.head()) throw std::logic_error("pretrain_epoch: model is in fine-tuning mode");
  for (auto& e : model.params()) e.tensor.set_requires_grad(true);
  const double ratio = state.optim.mask_ratio;
  if (masked_count(model.config().num_patches(), ratio) == 0) {
    throw std::invalid_argument("pretrain_epoch: mask ratio leaves nothing to reconstruct");
  }
  return run_epoch(data.size(), model, state, rng, {}, [&](std::size_t idx, std::size_t batch) {
    const auto plan = sample_mask(data[idx].count(), ratio, rng);
    const Tensor recon = model.pretrain_forward(data[idx], plan);
    return mwm_loss(masked_targets(data[idx], plan), recon, batch);
  });
}

double pretrain_eval_loss(const std::vector<sp::PatchSeq>& data, const vit::WavesModel& model, double mask_ratio,
                          tc::RngState& rng) {
  tc::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& p : data) {
    const auto plan = sample_mask(p.count(), mask_ratio, rng);
    total += mwm_loss(masked_targets(p, plan), model.pretrain_forward(p, plan), 1).item();
  }
  return total / static_cast<double>(data.size());
}

Tensor task_loss(const vit::TaskHeadSpec& head, const Tensor& output, const sp::GridSample& sample,
                 const TaskLossConfig& cfg, std::size_t batch) {
  switch (head.kind) {
    case vit::TaskKind::kSensing:
    case vit::TaskKind::kRfClass: {
      if (!sample.label) throw std::invalid_argument("classification sample without label: " + sample.sample_id);
      const Tensor probs = tc::softmax_rows(output);
      if (head.kind == vit::TaskKind::kSensing) return loss_sce(probs, {*sample.label}, cfg.smoothing, batch);
      std::vector<double> beta = cfg.class_weights;
      if (beta.empty()) beta.assign(head.outputs, 1.0);
      return loss_wce(probs, {*sample.label}, beta, batch);
    }
    case vit::TaskKind::kPositioning: {
      if (!sample.position) throw std::invalid_argument("positioning sample without position: " + sample.sample_id);
      const auto& p = *sample.position;
      return loss_mse_position(output, Tensor::from({1, 3}, {p[0], p[1], p[2]}), batch);
    }
    case vit::TaskKind::kChanEst: {
      if (!sample.snr_db) throw std::invalid_argument("channel sample without SNR: " + sample.sample_id);
      if (!sample.target.defined()) throw std::invalid_argument("channel sample without target: " + sample.sample_id);
      return loss_snr_mse({output}, {sample.target}, {*sample.snr_db}, cfg.snr, batch);
    }
  }
  throw std::logic_error("unhandled task kind");
}

EpochMetrics finetune_epoch(const std::vector<sp::GridSample>& data, vit::WavesModel& model,
                            const FreezePolicy& policy, const TaskLossConfig& loss, TrainState& state,
                            tc::RngState& rng) {
  if (!model.head()) throw std::logic_error("finetune_epoch: attach a task head first");
  apply_freeze(model, policy);
  const auto head = *model.head();
  const std::size_t blocks = model.config().encoder.blocks;
  const double decay = state.optim.layer_decay;
  const auto lr_scale = [blocks, decay](const std::string& name) { return layer_lr_scale(name, blocks, decay); };
  const std::size_t patch = model.config().patch;
  return run_epoch(data.size(), model, state, rng, lr_scale, [&](std::size_t idx, std::size_t batch) {
    const Tensor out = model.task_forward(sp::patchify(data[idx].data, patch));
    return task_loss(head, out, data[idx], loss, batch);
  });
}

Tensor task_predict(const vit::WavesModel& model, const sp::GridSample& sample) {
  if (!model.head()) throw std::logic_error("task_predict: model has no task head");
  tc::NoGradGuard no_grad;
  const Tensor out = model.task_forward(sp::patchify(sample.data, model.config().patch));
  if (model.head()->is_classification()) {
    const Tensor probs = tc::softmax_rows(out);
    return tc::reshape(probs, {probs.numel()});
  }
  if (model.head()->kind == vit::TaskKind::kPositioning) return tc::reshape(out, {3});
  return out;
}

}  // namespace wavesfm::train
