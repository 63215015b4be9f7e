#include "wavesfm/vitmodel/vit.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wavesfm/signalpipe/posembed.hpp"
#include "wavesfm/signalpipe/preprocess.hpp"

namespace wavesfm::vit {

using tc::ParameterStore;
using tc::Tensor;

namespace {

Tensor trunc_normal(tc::Shape shape, double stddev, tc::RngState& rng) {
  std::vector<double> v(tc::shape_numel(shape));
  for (auto& x : v) x = rng.truncated_normal(stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor normal(tc::Shape shape, double stddev, tc::RngState& rng) {
  std::vector<double> v(tc::shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor linear(const Tensor& x, const ParameterStore& params, const std::string& prefix) {
  return tc::add_row(tc::matmul(x, params.get(prefix + ".weight")), params.get(prefix + ".bias"));
}

std::string block_prefix(const char* tower, std::size_t index) {
  return std::string(tower) + ".block" + std::to_string(index);
}

BlockOptions tower_options(const TowerConfig& t, const ModelConfig& cfg) {
  BlockOptions o;
  o.heads = t.heads;
  o.scale = cfg.attention_scale;
  o.ln_eps = cfg.ln_eps;
  return o;
}

}  // namespace

void init_block(ParameterStore& params, const std::string& prefix, std::size_t dim, std::size_t hidden,
                tc::RngState& rng, double init_std) {
  params.add(prefix + ".ln1.scale", Tensor::full({dim}, 1.0, true));
  params.add(prefix + ".ln1.shift", Tensor::zeros({dim}, true));
  params.add(prefix + ".msa.qkv", trunc_normal({dim, 3 * dim}, init_std, rng));
  params.add(prefix + ".msa.proj", trunc_normal({dim, dim}, init_std, rng));
  params.add(prefix + ".ln2.scale", Tensor::full({dim}, 1.0, true));
  params.add(prefix + ".ln2.shift", Tensor::zeros({dim}, true));
  params.add(prefix + ".mlp.fc1.weight", trunc_normal({dim, hidden}, init_std, rng));
  params.add(prefix + ".mlp.fc1.bias", Tensor::zeros({hidden}, true));
  params.add(prefix + ".mlp.fc2.weight", trunc_normal({hidden, dim}, init_std, rng));
  params.add(prefix + ".mlp.fc2.bias", Tensor::zeros({dim}, true));
}

void init_lora(ParameterStore& params, const std::string& prefix, std::size_t dim, const LoraConfig& lora,
               tc::RngState& rng) {
  if (lora.rank < 1) throw std::invalid_argument("lora: rank must be at least 1");
  params.add(prefix + ".msa.lora.a_q", normal({dim, lora.rank}, lora.init_std, rng));
  params.add(prefix + ".msa.lora.b_q", Tensor::zeros({lora.rank, dim}, true));
  params.add(prefix + ".msa.lora.a_v", normal({dim, lora.rank}, lora.init_std, rng));
  params.add(prefix + ".msa.lora.b_v", Tensor::zeros({lora.rank, dim}, true));
}

Tensor msa_forward(const Tensor& z, const ParameterStore& params, const std::string& prefix,
                   const BlockOptions& opts) {
  const std::size_t dim = z.dim(1);
  if (opts.heads == 0 || dim % opts.heads != 0) {
    throw tc::ShapeError("msa: width " + std::to_string(dim) + " not divisible by " + std::to_string(opts.heads) +
                         " heads");
  }
  const Tensor qkv = tc::matmul(z, params.get(prefix + ".msa.qkv"));
  Tensor q = tc::slice_cols(qkv, 0, dim);
  const Tensor k = tc::slice_cols(qkv, dim, dim);
  Tensor v = tc::slice_cols(qkv, 2 * dim, dim);
  if (opts.lora) {
    const double alpha = opts.lora->alpha;
    const auto adapter = [&](const char* a, const char* b) {
      return tc::scale(
          tc::matmul(tc::matmul(z, params.get(prefix + ".msa.lora." + a)), params.get(prefix + ".msa.lora." + b)),
          alpha);
    };
    q = tc::add(q, adapter("a_q", "b_q"));
    v = tc::add(v, adapter("a_v", "b_v"));
  }

  const std::size_t head_dim = dim / opts.heads;
  const double scale =
      1.0 / std::sqrt(static_cast<double>(opts.scale == AttentionScale::kPerHead ? head_dim : dim));
  std::vector<Tensor> heads;
  heads.reserve(opts.heads);
  for (std::size_t h = 0; h < opts.heads; ++h) {
    const Tensor qh = tc::slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = tc::slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = tc::slice_cols(v, h * head_dim, head_dim);
    const Tensor weights = tc::softmax_rows(tc::scale(tc::matmul(qh, tc::transpose(kh)), scale));
    if (opts.attention_out) opts.attention_out->push_back(weights);
    heads.push_back(tc::matmul(weights, vh));
  }
  const Tensor joined = heads.size() == 1 ? heads.front() : tc::concat_cols(heads);
  return tc::matmul(joined, params.get(prefix + ".msa.proj"));
}

Tensor vit_block_forward(const Tensor& z, const ParameterStore& params, const std::string& prefix,
                         const BlockOptions& opts) {
  const Tensor normed =
      tc::layer_norm(z, params.get(prefix + ".ln1.scale"), params.get(prefix + ".ln1.shift"), opts.ln_eps);
  const Tensor zbar = tc::add(msa_forward(normed, params, prefix, opts), z);
  const Tensor normed2 =
      tc::layer_norm(zbar, params.get(prefix + ".ln2.scale"), params.get(prefix + ".ln2.shift"), opts.ln_eps);
  const Tensor hidden = tc::gelu(linear(normed2, params, prefix + ".mlp.fc1"));
  return tc::add(linear(hidden, params, prefix + ".mlp.fc2"), zbar);
}

EncoderState patch_embed(const Tensor& patches, const std::vector<std::size_t>& positions,
                         const ParameterStore& params, const Tensor& posembed) {
  const Tensor& proj = params.get("encoder.patch_embed");
  if (patches.rank() != 2 || patches.dim(1) != proj.dim(0)) {
    throw tc::ShapeError("patch_embed: patch length " + std::to_string(patches.rank() == 2 ? patches.dim(1) : 0) +
                         " vs projection input " + std::to_string(proj.dim(0)));
  }
  if (positions.size() != patches.dim(0)) throw tc::ShapeError("patch_embed: one position per patch required");
  EncoderState state;
  state.tokens = tc::add(tc::matmul(patches, proj), tc::gather_rows(posembed, positions));
  return state;
}

Tensor encoder_forward(const EncoderState& state, const ParameterStore& params, const ModelConfig& cfg,
                       const std::optional<LoraConfig>& lora) {
  BlockOptions opts = tower_options(cfg.encoder, cfg);
  opts.lora = lora;
  Tensor z = state.tokens;
  for (std::size_t k = 1; k <= cfg.encoder.blocks; ++k) z = vit_block_forward(z, params, block_prefix("encoder", k), opts);
  return z;
}

Tensor decoder_embed(const Tensor& enc_out, const MaskPlan& plan, const ParameterStore& params,
                     const Tensor& dec_posembed) {
  const std::size_t n = plan.total();
  if (enc_out.dim(0) != plan.visible.size()) {
    throw tc::ShapeError("decoder_embed: " + std::to_string(enc_out.dim(0)) + " encoder rows but plan has " +
                         std::to_string(plan.visible.size()) + " visible patches");
  }
  if (dec_posembed.dim(0) != n) throw tc::ShapeError("decoder_embed: position table does not cover the grid");
  const Tensor projected = tc::matmul(enc_out, params.get("decoder.embed"));
  // Row r of `pool` is projected row r for r < |visible|, the mask token after.
  const Tensor pool = tc::concat_rows({projected, params.get("decoder.mask_token")});
  std::vector<std::size_t> source(n, plan.visible.size());
  for (std::size_t i = 0; i < plan.visible.size(); ++i) source[plan.visible[i]] = i;
  return tc::add(tc::gather_rows(pool, source), dec_posembed);
}

Tensor decoder_forward(const Tensor& y0, const ParameterStore& params, const ModelConfig& cfg) {
  const BlockOptions opts = tower_options(cfg.decoder, cfg);
  Tensor y = y0;
  for (std::size_t l = 1; l <= cfg.decoder.blocks; ++l) y = vit_block_forward(y, params, block_prefix("decoder", l), opts);
  return y;
}

Tensor reconstruct(const Tensor& dec_out, const ParameterStore& params, const MaskPlan& plan) {
  if (plan.masked.empty()) return {};
  // Selecting before projecting gives the same rows as projecting all N.
  return tc::matmul(tc::gather_rows(dec_out, plan.masked), params.get("decoder.recon"));
}

EncoderState attach_cls(const sp::PatchSeq& patches, const ParameterStore& params, const Tensor& posembed_with_cls) {
  const Tensor& proj = params.get("encoder.patch_embed");
  if (patches.patch_dim() != proj.dim(0)) throw tc::ShapeError("attach_cls: patch length mismatch");
  if (posembed_with_cls.dim(0) != patches.count() + 1) throw tc::ShapeError("attach_cls: position table size");
  EncoderState state;
  state.tokens = tc::add(tc::concat_rows({params.get("encoder.cls_token"), tc::matmul(patches.patches, proj)}),
                         posembed_with_cls);
  state.has_cls = true;
  return state;
}

Tensor pool_features(const Tensor& enc_out, Pooling mode, bool has_cls) {
  switch (mode) {
    case Pooling::kToken: {
      const std::size_t first = 0;
      return tc::reshape(tc::gather_rows(enc_out, std::span<const std::size_t>(&first, 1)), {enc_out.dim(1)});
    }
    case Pooling::kAvg: return tc::mean_rows(enc_out, has_cls ? 1 : 0);
  }
  throw std::invalid_argument("pool_features: unknown mode");
}

std::string_view task_name(TaskKind t) {
  switch (t) {
    case TaskKind::kSensing: return "sensing";
    case TaskKind::kRfClass: return "rfclass";
    case TaskKind::kPositioning: return "positioning";
    case TaskKind::kChanEst: return "chanest";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  for (TaskKind t : {TaskKind::kSensing, TaskKind::kRfClass, TaskKind::kPositioning, TaskKind::kChanEst}) {
    if (task_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown task: " + std::string(name));
}

TaskHeadSpec default_head(TaskKind kind) {
  TaskHeadSpec spec;
  spec.kind = kind;
  switch (kind) {
    case TaskKind::kSensing: spec.outputs = 6; break;
    case TaskKind::kRfClass: spec.outputs = 20; break;
    case TaskKind::kPositioning: spec.outputs = 3; break;
    case TaskKind::kChanEst: spec.outputs = 0; break;
  }
  return spec;
}

ParameterStore make_task_head(const TaskHeadSpec& spec, const ModelConfig& cfg, tc::RngState& rng) {
  ParameterStore head;
  const std::size_t d = cfg.encoder.dim;
  if (spec.kind == TaskKind::kChanEst) {
    if (spec.target_height == 0 || spec.target_width == 0 || spec.target_channels == 0) {
      throw std::invalid_argument("chanest head needs the target grid shape");
    }
    init_block(head, "head.block", d, cfg.encoder.hidden, rng, cfg.init_std);
    const std::size_t out = cfg.patch * cfg.patch * spec.target_channels;
    head.add("head.proj.weight", trunc_normal({d, out}, cfg.init_std, rng));
    head.add("head.proj.bias", Tensor::zeros({out}, true));
    return head;
  }
  if (spec.outputs == 0) throw std::invalid_argument("linear head needs at least one output");
  head.add("head.norm.scale", Tensor::full({d}, 1.0, true));
  head.add("head.norm.shift", Tensor::zeros({d}, true));
  head.add("head.linear.weight", trunc_normal({d, spec.outputs}, cfg.init_std, rng));
  head.add("head.linear.bias", Tensor::zeros({spec.outputs}, true));
  return head;
}

namespace {

// Token rows [N x P*P*C] -> [H x W x C] on the target grid: unpatchify onto the
// model grid, then the fixed bicubic maps when the grids differ.
Tensor tokens_to_target_grid(const Tensor& tokens, const TaskHeadSpec& spec, const ModelConfig& cfg) {
  const std::size_t s = cfg.image_size, c = spec.target_channels;
  const std::size_t h = spec.target_height, w = spec.target_width;
  const auto to_patch = sp::grid_to_patch_index(s, s, c, cfg.patch);
  if (h == s && w == s) {
    return tc::gather(tokens, to_patch, {s, s, c});
  }
  const Tensor rh = Tensor::from({h, s}, sp::cubic_resize_matrix(s, h));
  const Tensor rw_t = tc::transpose(Tensor::from({w, s}, sp::cubic_resize_matrix(s, w)));
  std::vector<Tensor> planes;
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<std::size_t> plane_index(s * s);
    for (std::size_t i = 0; i < s * s; ++i) plane_index[i] = to_patch[i * c + ch];
    const Tensor plane = tc::gather(tokens, plane_index, {s, s});
    planes.push_back(tc::matmul(tc::matmul(rh, plane), rw_t));
  }
  // Stacked planes [C*H x W] -> interleaved [H x W x C].
  const Tensor stacked = tc::concat_rows(planes);
  std::vector<std::size_t> interleave(h * w * c);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) interleave[(i * w + j) * c + ch] = (ch * h + i) * w + j;
    }
  }
  return tc::gather(stacked, interleave, {h, w, c});
}

}  // namespace

Tensor head_forward(const TaskHeadSpec& spec, const Tensor& enc_out, bool has_cls, const ParameterStore& params,
                    const ModelConfig& cfg) {
  if (spec.kind == TaskKind::kChanEst) {
    BlockOptions opts = tower_options(cfg.encoder, cfg);
    Tensor tokens = enc_out;
    if (has_cls) {
      std::vector<std::size_t> rows(enc_out.dim(0) - 1);
      std::iota(rows.begin(), rows.end(), std::size_t{1});
      tokens = tc::gather_rows(enc_out, rows);
    }
    tokens = vit_block_forward(tokens, params, "head.block", opts);
    return tokens_to_target_grid(linear(tokens, params, "head.proj"), spec, cfg);
  }
  const Tensor feature = tc::reshape(pool_features(enc_out, cfg.pooling, has_cls), {1, cfg.encoder.dim});
  const Tensor normed =
      tc::layer_norm(feature, params.get("head.norm.scale"), params.get("head.norm.shift"), cfg.ln_eps);
  return linear(normed, params, "head.linear");
}

std::size_t param_count(const ParameterStore& params, const ParamFilter& filter) { return params.count(filter); }

bool is_lora_param(const std::string& name) { return name.find(".msa.lora.") != std::string::npos; }

bool is_head_param(const std::string& name) { return name.rfind("head.", 0) == 0; }

namespace {

std::size_t block_count(std::size_t dim, std::size_t hidden) {
  return 4 * dim                 // two layer norms
         + dim * 3 * dim         // qkv
         + dim * dim             // output projection
         + dim * hidden + hidden // fc1
         + hidden * dim + dim;   // fc2
}

}  // namespace

std::size_t encoder_param_count(const ModelConfig& cfg) {
  return cfg.patch_dim() * cfg.encoder.dim + cfg.encoder.blocks * block_count(cfg.encoder.dim, cfg.encoder.hidden);
}

std::size_t decoder_param_count(const ModelConfig& cfg) {
  return cfg.encoder.dim * cfg.decoder.dim + cfg.decoder.dim +
         cfg.decoder.blocks * block_count(cfg.decoder.dim, cfg.decoder.hidden) + cfg.decoder.dim * cfg.patch_dim();
}

WavesModel::WavesModel(const ModelConfig& cfg, tc::RngState& rng, bool with_decoder) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.encoder.dim;
  params_.add("encoder.patch_embed", trunc_normal({cfg_.patch_dim(), d}, cfg_.init_std, rng));
  for (std::size_t k = 1; k <= cfg_.encoder.blocks; ++k) {
    init_block(params_, block_prefix("encoder", k), d, cfg_.encoder.hidden, rng, cfg_.init_std);
  }
  if (with_decoder) {
    const std::size_t dd = cfg_.decoder.dim;
    params_.add("decoder.embed", trunc_normal({d, dd}, cfg_.init_std, rng));
    params_.add("decoder.mask_token", normal({dd}, cfg_.init_std, rng));
    for (std::size_t l = 1; l <= cfg_.decoder.blocks; ++l) {
      init_block(params_, block_prefix("decoder", l), dd, cfg_.decoder.hidden, rng, cfg_.init_std);
    }
    params_.add("decoder.recon", trunc_normal({dd, cfg_.patch_dim()}, cfg_.init_std, rng));
  }
  build_posembeds();
}

void WavesModel::build_posembeds() {
  const std::size_t g = cfg_.grid();
  enc_pos_ = sp::posembed_2d(g, g, cfg_.encoder.dim);
  enc_pos_cls_ = sp::posembed_2d_with_cls(g, g, cfg_.encoder.dim);
  dec_pos_ = sp::posembed_2d(g, g, cfg_.decoder.dim);
}

void WavesModel::drop_decoder() {
  for (const auto& name : params_.names_with_prefix("decoder.")) params_.erase(name);
}

void WavesModel::attach_head(const TaskHeadSpec& spec, tc::RngState& rng) {
  if (head_) throw std::logic_error("model already has a task head");
  if (spec.uses_cls() && !params_.contains("encoder.cls_token")) {
    params_.add("encoder.cls_token", normal({cfg_.encoder.dim}, cfg_.init_std, rng));
  }
  auto head = make_task_head(spec, cfg_, rng);
  for (auto& e : head) params_.add(e.name, e.tensor);
  head_ = spec;
}

void WavesModel::attach_lora(const LoraConfig& lora, tc::RngState& rng) {
  if (lora_) throw std::logic_error("model already carries LoRA adapters");
  for (std::size_t k = 1; k <= cfg_.encoder.blocks; ++k) {
    init_lora(params_, block_prefix("encoder", k), cfg_.encoder.dim, lora, rng);
  }
  lora_ = lora;
}

void WavesModel::set_structure(std::optional<TaskHeadSpec> head, std::optional<LoraConfig> lora) {
  head_ = std::move(head);
  lora_ = std::move(lora);
}

Tensor WavesModel::pretrain_forward(const sp::PatchSeq& patches, const MaskPlan& plan) const {
  if (!has_decoder()) throw std::logic_error("pretrain_forward needs the decoder");
  if (plan.total() != patches.count()) throw tc::ShapeError("mask plan does not match patch count");
  const Tensor visible = tc::gather_rows(patches.patches, plan.visible);
  const EncoderState state = patch_embed(visible, plan.visible, params_, enc_pos_);
  const Tensor latent = encoder_forward(state, params_, cfg_);
  const Tensor decoded = decoder_forward(decoder_embed(latent, plan, params_, dec_pos_), params_, cfg_);
  return reconstruct(decoded, params_, plan);
}

Tensor WavesModel::task_forward(const sp::PatchSeq& patches) const {
  if (!head_) throw std::logic_error("task_forward needs a task head");
  EncoderState state;
  if (head_->uses_cls()) {
    state = attach_cls(patches, params_, enc_pos_cls_);
  } else {
    std::vector<std::size_t> all(patches.count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    state = patch_embed(patches.patches, all, params_, enc_pos_);
  }
  const Tensor out = encoder_forward(state, params_, cfg_, lora_);
  return head_forward(*head_, out, state.has_cls, params_, cfg_);
}

}  // namespace wavesfm::vit
