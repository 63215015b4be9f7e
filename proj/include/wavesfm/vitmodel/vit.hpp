#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wavesfm/signalpipe/patch.hpp"
#include "wavesfm/tensorcore/ops.hpp"
#include "wavesfm/tensorcore/parameter_store.hpp"
#include "wavesfm/tensorcore/rng.hpp"
#include "wavesfm/vitmodel/config.hpp"

namespace wavesfm::vit {

// Partition of patch positions for one pre-training sample. Both index lists
// are ascending; `order` is the shuffle that produced them.
struct MaskPlan {
  std::vector<std::size_t> order;
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;
  double ratio = 0.0;

  std::size_t total() const { return visible.size() + masked.size(); }
};

// Runtime knobs shared by every block of one tower.
struct BlockOptions {
  std::size_t heads = 1;
  AttentionScale scale = AttentionScale::kPerHead;
  double ln_eps = 1e-6;
  // Present only when the tower carries query/value adapters.
  std::optional<LoraConfig> lora;
  // When set, receives the softmax weights of every head.
  std::vector<tc::Tensor>* attention_out = nullptr;
};

struct EncoderState {
  tc::Tensor tokens;              // [n x D_enc]
  std::optional<MaskPlan> plan;   // set during pre-training
  bool has_cls = false;
};

// Parameter naming: <prefix>.ln1.{scale,shift}, <prefix>.msa.{qkv,proj},
// <prefix>.msa.lora.{a_q,b_q,a_v,b_v}, <prefix>.ln2.{scale,shift},
// <prefix>.mlp.fc1.{weight,bias}, <prefix>.mlp.fc2.{weight,bias}.
void init_block(tc::ParameterStore& params, const std::string& prefix, std::size_t dim, std::size_t hidden,
                tc::RngState& rng, double init_std);
void init_lora(tc::ParameterStore& params, const std::string& prefix, std::size_t dim, const LoraConfig& lora,
               tc::RngState& rng);

tc::Tensor msa_forward(const tc::Tensor& z, const tc::ParameterStore& params, const std::string& prefix,
                       const BlockOptions& opts);
tc::Tensor vit_block_forward(const tc::Tensor& z, const tc::ParameterStore& params, const std::string& prefix,
                             const BlockOptions& opts);

// x_vis E_patch + E_pos[positions]; positions index rows of `posembed`.
EncoderState patch_embed(const tc::Tensor& patches, const std::vector<std::size_t>& positions,
                         const tc::ParameterStore& params, const tc::Tensor& posembed);

// Applies encoder.block1 .. encoder.block{K} in order.
tc::Tensor encoder_forward(const EncoderState& state, const tc::ParameterStore& params, const ModelConfig& cfg,
                           const std::optional<LoraConfig>& lora = std::nullopt);

// Visible rows projected by E_decoder, mask token at masked rows, plus the
// decoder position codes, in original grid order. Result is [N x D_dec].
tc::Tensor decoder_embed(const tc::Tensor& enc_out, const MaskPlan& plan, const tc::ParameterStore& params,
                         const tc::Tensor& dec_posembed);
tc::Tensor decoder_forward(const tc::Tensor& y0, const tc::ParameterStore& params, const ModelConfig& cfg);

// Projects every decoder row with E_recon and keeps the masked rows in the
// plan's masked-index order: [|masked| x P*P*C]. Undefined when nothing is masked.
tc::Tensor reconstruct(const tc::Tensor& dec_out, const tc::ParameterStore& params, const MaskPlan& plan);

// [x_CLS; x_i E_patch] + posembed_with_cls, N + 1 rows.
EncoderState attach_cls(const sp::PatchSeq& patches, const tc::ParameterStore& params,
                        const tc::Tensor& posembed_with_cls);

// Row 0 for token pooling; mean of rows 1.. (or all rows when there is no
// class token) for average pooling.
tc::Tensor pool_features(const tc::Tensor& enc_out, Pooling mode, bool has_cls = true);

enum class TaskKind { kSensing, kRfClass, kPositioning, kChanEst };

std::string_view task_name(TaskKind t);
TaskKind parse_task(std::string_view name);

struct TaskHeadSpec {
  TaskKind kind = TaskKind::kSensing;
  std::size_t outputs = 6;          // linear heads
  std::size_t target_height = 0;    // channel estimation grid
  std::size_t target_width = 0;
  std::size_t target_channels = 2;

  bool is_classification() const { return kind == TaskKind::kSensing || kind == TaskKind::kRfClass; }
  bool uses_cls() const { return kind != TaskKind::kChanEst; }
};

// Default head geometry per task (6, 20 and 3 outputs; chanest needs the
// target grid filled in by the caller).
TaskHeadSpec default_head(TaskKind kind);

// Head parameters under "head.": layer norm of the pooled feature followed by
// a linear layer D_enc -> outputs, or for channel estimation one ViT block, a
// token projection to P*P*C_out and a fixed unpatchify + resize onto the
// target grid.
tc::ParameterStore make_task_head(const TaskHeadSpec& spec, const ModelConfig& cfg, tc::RngState& rng);

// Raw head output: logits [1 x C], position [1 x 3], or CSI grid [H x W x C_out].
tc::Tensor head_forward(const TaskHeadSpec& spec, const tc::Tensor& enc_out, bool has_cls,
                        const tc::ParameterStore& params, const ModelConfig& cfg);

using ParamFilter = std::function<bool(const tc::ParameterStore::Entry&)>;
std::size_t param_count(const tc::ParameterStore& params, const ParamFilter& filter = {});
bool is_lora_param(const std::string& name);
bool is_head_param(const std::string& name);

// Encoder-only parameter count for a config, without instantiating tensors.
std::size_t encoder_param_count(const ModelConfig& cfg);
std::size_t decoder_param_count(const ModelConfig& cfg);

// Whole model: backbone encoder, optional MAE decoder, optional LoRA and
// task head, all in one ParameterStore.
class WavesModel {
 public:
  WavesModel() = default;
  WavesModel(const ModelConfig& cfg, tc::RngState& rng, bool with_decoder = true);

  const ModelConfig& config() const { return cfg_; }
  tc::ParameterStore& params() { return params_; }
  const tc::ParameterStore& params() const { return params_; }
  const std::optional<LoraConfig>& lora() const { return lora_; }
  const std::optional<TaskHeadSpec>& head() const { return head_; }

  bool has_decoder() const { return params_.contains("decoder.embed"); }
  void drop_decoder();
  // Adds x_CLS, the head parameters and (optionally) LoRA adapters.
  void attach_head(const TaskHeadSpec& spec, tc::RngState& rng);
  void attach_lora(const LoraConfig& lora, tc::RngState& rng);
  // Restores metadata after loading a parameter store from disk.
  void set_structure(std::optional<TaskHeadSpec> head, std::optional<LoraConfig> lora);

  const tc::Tensor& encoder_posembed() const { return enc_pos_; }
  const tc::Tensor& encoder_posembed_cls() const { return enc_pos_cls_; }
  const tc::Tensor& decoder_posembed() const { return dec_pos_; }

  // Masked reconstruction [|masked| x P*P*C] for one sample.
  tc::Tensor pretrain_forward(const sp::PatchSeq& patches, const MaskPlan& plan) const;
  // Fine-tuning forward through encoder and head.
  tc::Tensor task_forward(const sp::PatchSeq& patches) const;

  void replace_params(tc::ParameterStore params) { params_ = std::move(params); }

 private:
  void build_posembeds();

  ModelConfig cfg_;
  tc::ParameterStore params_;
  std::optional<LoraConfig> lora_;
  std::optional<TaskHeadSpec> head_;
  tc::Tensor enc_pos_, enc_pos_cls_, dec_pos_;
};

}  // namespace wavesfm::vit
