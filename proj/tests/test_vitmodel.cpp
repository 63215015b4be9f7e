#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wavesfm/signalpipe/patch.hpp"
#include "wavesfm/signalpipe/posembed.hpp"
#include "wavesfm/trainkit/losses.hpp"
#include "wavesfm/vitmodel/vit.hpp"

using namespace wavesfm;
using tc::Tensor;
using testutil::randn;

namespace {

vit::ModelConfig tiny() {
  vit::ModelConfig c;
  c.image_size = 8;
  c.patch = 4;
  c.channels = 1;
  c.encoder = {2, 16, 32, 2};
  c.decoder = {2, 16, 32, 2};
  return c;
}

std::vector<std::size_t> range(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

tc::ParameterStore block_params(std::size_t dim, std::size_t hidden, tc::RngState& rng, double std = 0.3) {
  tc::ParameterStore ps;
  vit::init_block(ps, "b", dim, hidden, rng, std);
  // Non-trivial layer-norm affine and biases so every path carries signal.
  for (auto& e : ps) {
    if (e.tensor.rank() == 1) {
      for (auto& v : e.tensor.mutable_data()) v += rng.normal(0.0, 0.2);
    }
  }
  return ps;
}

}  // namespace

TEST_CASE("Table I geometry and parameter counts") {
  const vit::ModelConfig full;
  CHECK(full.patch == 16);
  CHECK(full.encoder.blocks == 12);
  CHECK(full.encoder.dim == 512);
  CHECK(full.encoder.hidden == 2048);
  CHECK(full.encoder.heads == 8);
  CHECK(full.decoder.blocks == 8);
  CHECK(full.decoder.dim == 256);
  CHECK(full.decoder.hidden == 1024);
  CHECK(full.decoder.heads == 16);
  CHECK(full.num_patches() == 196);
  const double enc = static_cast<double>(vit::encoder_param_count(full));
  const double dec = static_cast<double>(vit::decoder_param_count(full));
  CHECK(std::abs(enc / 38e6 - 1.0) <= 0.05);
  CHECK(std::abs(dec / 7e6 - 1.0) <= 0.10);
  const std::size_t lora = 4 * 512 * 50 * 12;
  CHECK(lora == 1228800);

  tc::RngState rng(1);
  const auto cfg = tiny();
  vit::WavesModel m(cfg, rng);
  const auto enc_n = vit::param_count(m.params(), [](const tc::ParameterStore::Entry& e) { return e.name.rfind("encoder.", 0) == 0; });
  const auto dec_n = vit::param_count(m.params(), [](const tc::ParameterStore::Entry& e) { return e.name.rfind("decoder.", 0) == 0; });
  CHECK(enc_n == vit::encoder_param_count(cfg));
  CHECK(dec_n == vit::decoder_param_count(cfg));
  m.attach_head(vit::default_head(vit::TaskKind::kSensing), rng);
  m.attach_lora({3, 1.0, 0.02}, rng);
  const auto lora_n = vit::param_count(m.params(), [](const tc::ParameterStore::Entry& e) { return vit::is_lora_param(e.name); });
  CHECK(lora_n == 4 * 16 * 3 * 2);
}

TEST_CASE("config validation") {
  auto c = tiny();
  c.encoder.heads = 3;
  CHECK_THROWS(c.validate());
  c = tiny();
  c.patch = 3;
  CHECK_THROWS(c.validate());
  c = tiny();
  const auto j = vit::to_json(c);
  CHECK(vit::to_json(vit::model_config_from_json(j)) == j);
}

TEST_CASE("patch embedding") {
  tc::ParameterStore ps;
  ps.add("encoder.patch_embed", Tensor::zeros({768, 512}));
  const Tensor pos = sp::posembed_2d(14, 14, 512);
  std::vector<std::size_t> visible(49);
  for (std::size_t i = 0; i < 49; ++i) visible[i] = 4 * i;
  const auto st = vit::patch_embed(Tensor::zeros({49, 768}), visible, ps, pos);
  CHECK(st.tokens.shape() == tc::Shape{49, 512});
  const Tensor expect = tc::gather_rows(pos, visible);
  CHECK(bit_equal(st.tokens, expect));

  tc::RngState rng(2);
  tc::ParameterStore p1, p2;
  const Tensor e = randn({4, 16}, rng, 1.0, false);
  p1.add("encoder.patch_embed", e);
  p2.add("encoder.patch_embed", tc::scale(e, 2.0));
  const Tensor x = randn({3, 4}, rng, 1.0, false);
  const Tensor small_pos = sp::posembed_2d(2, 2, 16);
  const std::vector<std::size_t> vis = {0, 2, 3};
  const Tensor d1 = tc::sub(vit::patch_embed(x, vis, p1, small_pos).tokens, tc::gather_rows(small_pos, vis));
  const Tensor d2 = tc::sub(vit::patch_embed(x, vis, p2, small_pos).tokens, tc::gather_rows(small_pos, vis));
  for (std::size_t i = 0; i < d1.numel(); ++i) CHECK(d2.at(i) == doctest::Approx(2.0 * d1.at(i)).epsilon(1e-14));
  CHECK_THROWS(vit::patch_embed(randn({3, 5}, rng, 1.0, false), vis, p1, small_pos));
}

TEST_CASE("multi-head self-attention") {
  tc::RngState rng(3);
  const std::size_t D = 16;
  auto ps = block_params(D, 32, rng);
  vit::BlockOptions opts;
  opts.heads = 4;

  SUBCASE("single token attends to itself") {
    const Tensor z = randn({1, D}, rng, 1.0, false);
    std::vector<Tensor> att;
    opts.attention_out = &att;
    const Tensor out = vit::msa_forward(z, ps, "b", opts);
    for (const auto& w : att) CHECK(w.item() == 1.0);
    const Tensor v = tc::slice_cols(tc::matmul(z, ps.get("b.msa.qkv")), 2 * D, D);
    const Tensor ref = tc::matmul(v, ps.get("b.msa.proj"));
    for (std::size_t i = 0; i < D; ++i) CHECK(out.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-14));
  }
  SUBCASE("attention rows sum to one") {
    std::vector<Tensor> att;
    opts.attention_out = &att;
    vit::msa_forward(randn({7, D}, rng, 1.0, false), ps, "b", opts);
    REQUIRE(att.size() == 4);
    for (const auto& w : att) {
      for (std::size_t r = 0; r < 7; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) s += w.at(r * 7 + c);
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("LoRA with zero B or zero alpha is bit-identical") {
    const Tensor z = randn({5, D}, rng, 1.0, false);
    const Tensor base = vit::msa_forward(z, ps, "b", opts);
    vit::init_lora(ps, "b", D, {4, 8.0, 0.02}, rng);
    opts.lora = vit::LoraConfig{4, 8.0, 0.02};
    CHECK(bit_equal(vit::msa_forward(z, ps, "b", opts), base));
    for (auto& v : ps.get("b.msa.lora.b_q").mutable_data()) v = rng.normal();
    CHECK_FALSE(bit_equal(vit::msa_forward(z, ps, "b", opts), base));
    opts.lora->alpha = 0.0;
    CHECK(bit_equal(vit::msa_forward(z, ps, "b", opts), base));
  }
  SUBCASE("model-dimension scaling differs from per-head scaling") {
    const Tensor z = randn({5, D}, rng, 1.0, false);
    const Tensor a = vit::msa_forward(z, ps, "b", opts);
    opts.scale = vit::AttentionScale::kModelDim;
    CHECK_FALSE(bit_equal(vit::msa_forward(z, ps, "b", opts), a));
  }
}

TEST_CASE("ViT block") {
  tc::RngState rng(4);
  const std::size_t D = 8;
  vit::BlockOptions opts;
  opts.heads = 2;
  SUBCASE("zero weights pass the residual through") {
    tc::ParameterStore ps;
    vit::init_block(ps, "b", D, 16, rng, 0.02);
    for (auto& e : ps) {
      if (e.name.find(".ln") != std::string::npos) continue;
      for (auto& v : e.tensor.mutable_data()) v = 0.0;
    }
    for (std::size_t n : {1u, 3u, 9u}) {
      const Tensor z = randn({n, D}, rng, 1.0, false);
      CHECK(bit_equal(vit::vit_block_forward(z, ps, "b", opts), z));
    }
  }
  SUBCASE("finite-difference gradient through the block") {
    auto ps = block_params(D, 16, rng);
    std::vector<std::string> names;
    std::vector<Tensor> inputs = {randn({4, D}, rng)};
    for (auto& e : ps) {
      names.push_back(e.name);
      inputs.push_back(e.tensor);
    }
    const auto f = [&](const std::vector<Tensor>& in) {
      tc::ParameterStore local;
      for (std::size_t i = 0; i < names.size(); ++i) local.add(names[i], in[i + 1]);
      return vit::vit_block_forward(in[0], local, "b", opts);
    };
    CHECK(testutil::grad_check(f, inputs) < 1e-4);
    opts.lora = vit::LoraConfig{2, 0.5, 0.3};
    tc::ParameterStore with;
    for (std::size_t i = 0; i < names.size(); ++i) with.add(names[i], inputs[i + 1]);
    vit::init_lora(with, "b", D, *opts.lora, rng);
    for (auto& v : with.get("b.msa.lora.b_q").mutable_data()) v = rng.normal(0.0, 0.3);
    for (auto& v : with.get("b.msa.lora.b_v").mutable_data()) v = rng.normal(0.0, 0.3);
    std::vector<std::string> lnames;
    std::vector<Tensor> lin = {inputs[0]};
    for (auto& e : with) {
      lnames.push_back(e.name);
      lin.push_back(e.tensor);
    }
    const auto g = [&](const std::vector<Tensor>& in) {
      tc::ParameterStore local;
      for (std::size_t i = 0; i < lnames.size(); ++i) local.add(lnames[i], in[i + 1]);
      return vit::vit_block_forward(in[0], local, "b", opts);
    };
    CHECK(testutil::grad_check(g, lin) < 1e-4);
  }
}

TEST_CASE("encoder forward") {
  tc::RngState rng(5);
  auto cfg = tiny();
  vit::WavesModel m(cfg, rng);
  const auto seq = sp::patchify(randn({8, 8, 1}, rng, 1.0, false), 4);
  const auto st = vit::patch_embed(seq.patches, range(4), m.params(), m.encoder_posembed());
  const Tensor a = vit::encoder_forward(st, m.params(), cfg);
  const Tensor b = vit::encoder_forward(st, m.params(), cfg);
  CHECK(a.shape() == st.tokens.shape());
  CHECK(bit_equal(a, b));
  cfg.encoder.blocks = 0;
  CHECK(bit_equal(vit::encoder_forward(st, m.params(), cfg), st.tokens));
}

TEST_CASE("decoder embedding and reconstruction selection") {
  tc::RngState rng(6);
  const auto cfg = tiny();
  vit::WavesModel m(cfg, rng);
  const auto seq = sp::patchify(randn({8, 8, 1}, rng, 1.0, false), 4);

  SUBCASE("no masking gives no mask-token rows and an empty reconstruction") {
    const auto plan = train::sample_mask(4, 0.0, rng);
    CHECK(plan.masked.empty());
    const auto st = vit::patch_embed(seq.patches, plan.visible, m.params(), m.encoder_posembed());
    const Tensor y = vit::decoder_embed(vit::encoder_forward(st, m.params(), cfg), plan, m.params(), m.decoder_posembed());
    CHECK(y.dim(0) == 4);
    const Tensor mask = m.params().get("decoder.mask_token");
    for (std::size_t r = 0; r < 4; ++r) {
      bool is_mask = true;
      for (std::size_t k = 0; k < 16; ++k) is_mask &= y.at(r * 16 + k) == mask.at(k) + m.decoder_posembed().at(r * 16 + k);
      CHECK_FALSE(is_mask);
    }
  }
  SUBCASE("masked rows are the mask token plus position codes, in grid order") {
    vit::MaskPlan plan;
    plan.visible = {1};
    plan.masked = {0, 2, 3};
    plan.order = {1, 3, 0, 2};
    plan.ratio = 0.75;
    const auto st = vit::patch_embed(tc::gather_rows(seq.patches, plan.visible), plan.visible, m.params(), m.encoder_posembed());
    const Tensor enc = vit::encoder_forward(st, m.params(), cfg);
    const Tensor y = vit::decoder_embed(enc, plan, m.params(), m.decoder_posembed());
    CHECK(y.shape() == tc::Shape{4, 16});
    const Tensor mask = m.params().get("decoder.mask_token");
    for (std::size_t r : plan.masked) {
      for (std::size_t k = 0; k < 16; ++k) CHECK(y.at(r * 16 + k) == mask.at(k) + m.decoder_posembed().at(r * 16 + k));
    }
    const Tensor dec = vit::decoder_forward(y, m.params(), cfg);
    const Tensor rec = vit::reconstruct(dec, m.params(), plan);
    CHECK(rec.shape() == tc::Shape{3, 16});
    const Tensor all = tc::matmul(dec, m.params().get("decoder.recon"));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < 16; ++k) CHECK(rec.at(i * 16 + k) == all.at(plan.masked[i] * 16 + k));
    }
    vit::MaskPlan bad = plan;
    bad.visible = {1, 2};
    CHECK_THROWS(vit::decoder_embed(enc, bad, m.params(), m.decoder_posembed()));
  }
  SUBCASE("full-size masking arithmetic") {
    const auto plan = train::sample_mask(196, 0.75, rng);
    CHECK(plan.masked.size() == 147);
    CHECK(plan.visible.size() == 49);
  }
}

TEST_CASE("encoder output on visible tokens ignores masked content") {
  tc::RngState rng(7);
  const auto cfg = tiny();
  vit::WavesModel m(cfg, rng);
  Tensor grid = randn({8, 8, 1}, rng, 1.0, false);
  const auto seq1 = sp::patchify(grid, 4);
  const auto plan = train::sample_mask(4, 0.5, rng);
  const auto plan_copy = plan;
  Tensor other = seq1.patches.clone_leaf(false);
  for (std::size_t r : plan.masked) {
    for (std::size_t k = 0; k < 16; ++k) other.mutable_data()[r * 16 + k] = 100.0 + double(k);
  }
  sp::PatchSeq seq2 = seq1;
  seq2.patches = other;
  const Tensor r1 = m.pretrain_forward(seq1, plan);
  const Tensor r2 = m.pretrain_forward(seq2, plan_copy);
  CHECK(bit_equal(r1, r2));
}

TEST_CASE("class token, pooling and task heads") {
  tc::RngState rng(8);
  auto cfg = tiny();
  vit::WavesModel m(cfg, rng, false);
  m.attach_head(vit::default_head(vit::TaskKind::kSensing), rng);
  for (auto& v : m.params().get("encoder.patch_embed").mutable_data()) v = 0.0;
  const auto seq = sp::patchify(Tensor::zeros({8, 8, 1}), 4);
  const auto st = vit::attach_cls(seq, m.params(), m.encoder_posembed_cls());
  CHECK(st.has_cls);
  CHECK(st.tokens.dim(0) == 5);
  for (std::size_t k = 0; k < 16; ++k) CHECK(st.tokens.at(k) == m.params().get("encoder.cls_token").at(k));

  CHECK(vit::ModelConfig{}.num_patches() + 1 == 197);

  const Tensor rows = Tensor::from({3, 2}, {1, 2, 10, 20, 30, 40});
  const Tensor tok = vit::pool_features(rows, vit::Pooling::kToken);
  CHECK(tok.at(0) == 1.0);
  CHECK(tok.at(1) == 2.0);
  const Tensor avg = vit::pool_features(rows, vit::Pooling::kAvg, true);
  CHECK(avg.at(0) == 20.0);
  CHECK(avg.at(1) == 30.0);
  CHECK(vit::pool_features(Tensor::full({4, 3}, 2.5), vit::Pooling::kAvg, false).at(2) == 2.5);
  CHECK_THROWS(vit::parse_pooling("max"));

  CHECK(vit::default_head(vit::TaskKind::kSensing).outputs == 6);
  CHECK(vit::default_head(vit::TaskKind::kRfClass).outputs == 20);
  CHECK(vit::default_head(vit::TaskKind::kPositioning).outputs == 3);
  CHECK_THROWS(vit::parse_task("segmentation"));

  const Tensor x = randn({8, 8, 1}, rng, 1.0, false);
  CHECK(m.task_forward(sp::patchify(x, 4)).shape() == tc::Shape{1, 6});
  vit::WavesModel p(cfg, rng, false);
  p.attach_head(vit::default_head(vit::TaskKind::kPositioning), rng);
  CHECK(p.task_forward(sp::patchify(x, 4)).shape() == tc::Shape{1, 3});

  cfg.channels = 4;
  vit::WavesModel ce(cfg, rng, false);
  auto h = vit::default_head(vit::TaskKind::kChanEst);
  h.target_height = 14;
  h.target_width = 6;
  ce.attach_head(h, rng);
  CHECK_FALSE(ce.params().contains("encoder.cls_token"));
  CHECK(ce.task_forward(sp::patchify(randn({8, 8, 4}, rng, 1.0, false), 4)).shape() == tc::Shape{14, 6, 2});
}

TEST_CASE("full MWM loss gradient on a tiny model") {
  tc::RngState rng(9);
  auto cfg = tiny();
  vit::WavesModel m(cfg, rng);
  // Larger init so the finite differences see non-trivial curvature.
  for (auto& e : m.params()) {
    for (auto& v : e.tensor.mutable_data()) v += rng.normal(0.0, 0.1);
  }
  const auto seq = sp::patchify(randn({8, 8, 1}, rng, 1.0, false), 4);
  const auto plan = train::sample_mask(4, 0.5, rng);
  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (auto& e : m.params()) {
    names.push_back(e.name);
    inputs.push_back(e.tensor);
  }
  const Tensor targets = tc::gather_rows(seq.patches, plan.masked);
  const auto f = [&](const std::vector<Tensor>& in) {
    vit::WavesModel local = m;
    tc::ParameterStore ps;
    for (std::size_t i = 0; i < names.size(); ++i) ps.add(names[i], in[i]);
    local.replace_params(ps);
    return train::mwm_loss(targets, local.pretrain_forward(seq, plan), 1);
  };
  CHECK(testutil::grad_check(f, inputs) < 1e-4);
}

TEST_CASE("pre-training forward cost scales with the visible count") {
  tc::RngState rng(10);
  vit::ModelConfig cfg;
  cfg.channels = 1;
  vit::WavesModel m(cfg, rng);
  const auto seq = sp::patchify(randn({224, 224, 1}, rng, 1.0, false), 16);
  const auto time_ratio = [&](double ratio) {
    const auto plan = train::sample_mask(196, ratio, rng);
    tc::NoGradGuard ng;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 2; ++i) m.pretrain_forward(seq, plan);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  time_ratio(0.75);
  const double t0 = time_ratio(0.0);
  const double t75 = time_ratio(0.75);
  MESSAGE("forward time gamma=0: " << t0 << " s, gamma=0.75: " << t75 << " s");
  CHECK(t75 < 0.6 * t0);
}
