#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "test_util.hpp"
#include "wavesfm/signalpipe/patch.hpp"
#include "wavesfm/trainkit/trainer.hpp"

using namespace wavesfm;
using tc::Tensor;
using testutil::randn;

namespace {

vit::ModelConfig tiny(std::size_t blocks = 2, std::size_t dim = 8) {
  vit::ModelConfig c;
  c.image_size = 8;
  c.patch = 4;
  c.channels = 1;
  c.encoder = {blocks, dim, 2 * dim, 2};
  c.decoder = {1, dim, 2 * dim, 2};
  return c;
}

std::vector<sp::PatchSeq> patch_set(std::size_t n, tc::RngState& rng) {
  std::vector<sp::PatchSeq> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sp::patchify(randn({8, 8, 1}, rng, 1.0, false), 4));
  return out;
}

std::vector<sp::GridSample> labelled_set(std::size_t n, std::size_t classes, tc::RngState& rng) {
  std::vector<sp::GridSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    sp::GridSample s;
    s.data = randn({8, 8, 1}, rng, 1.0, false);
    s.label = static_cast<int>(i % classes);
    out.push_back(std::move(s));
  }
  return out;
}

train::OptimConfig quick_optim(double lr, std::size_t batch, std::size_t epochs) {
  auto o = train::finetune_defaults();
  o.lr = lr;
  o.batch_size = batch;
  o.epochs = epochs;
  o.warmup_epochs = 0;
  return o;
}

std::map<std::string, std::uint64_t> checksums(const tc::ParameterStore& ps) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : ps) out[e.name] = tc::tensor_checksum(e.tensor);
  return out;
}

// The class token trains with the head under every policy.
bool head_side(const std::string& name) { return vit::is_head_param(name) || name == "encoder.cls_token"; }

// One random patch per sample tiled over the grid, so every masked patch is
// recoverable from any visible one.
std::vector<sp::PatchSeq> tiled_set(std::size_t n, tc::RngState& rng) {
  std::vector<sp::PatchSeq> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> q(16), v(64);
    for (auto& x : q) x = rng.normal();
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 8; ++c) v[r * 8 + c] = q[(r % 4) * 4 + c % 4];
    }
    out.push_back(sp::patchify(Tensor::from({8, 8, 1}, std::move(v)), 4));
  }
  return out;
}

Tensor probs_from(const Tensor& logits) { return tc::softmax_rows(logits); }

}  // namespace

TEST_CASE("mask sampling") {
  tc::RngState rng(1);
  SUBCASE("full-size geometry") {
    const auto p = train::sample_mask(196, 0.75, rng);
    CHECK(p.visible.size() == 49);
    CHECK(p.masked.size() == 147);
  }
  SUBCASE("partition, ordering and exact count") {
    for (std::size_t n : {1u, 4u, 7u, 16u, 196u}) {
      for (double g : {0.0, 0.1, 0.33, 0.5, 0.75, 0.9, 0.99}) {
        const auto p = train::sample_mask(n, g, rng);
        CHECK(p.masked.size() == static_cast<std::size_t>(std::floor(g * static_cast<double>(n))));
        CHECK(p.total() == n);
        std::vector<int> seen(n, 0);
        for (auto i : p.visible) ++seen[i];
        for (auto i : p.masked) ++seen[i];
        for (int s : seen) CHECK(s == 1);
        CHECK(std::is_sorted(p.visible.begin(), p.visible.end()));
        CHECK(std::is_sorted(p.masked.begin(), p.masked.end()));
      }
    }
  }
  SUBCASE("no masking") {
    const auto p = train::sample_mask(16, 0.0, rng);
    CHECK(p.masked.empty());
    CHECK(p.visible.size() == 16);
  }
  SUBCASE("uniform masking frequency") {
    std::vector<int> hits(16, 0);
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) {
      for (auto i : train::sample_mask(16, 0.5, rng).masked) ++hits[i];
    }
    for (int h : hits) CHECK(std::abs(h / double(draws) - 0.5) < 0.01);
  }
  SUBCASE("independent draws differ") {
    CHECK(train::sample_mask(196, 0.75, rng).masked != train::sample_mask(196, 0.75, rng).masked);
  }
  CHECK_THROWS(train::sample_mask(16, 1.0, rng));
  CHECK_THROWS(train::sample_mask(16, -0.1, rng));
}

TEST_CASE("masked reconstruction loss") {
  tc::RngState rng(2);
  const Tensor t = randn({5, 4}, rng, 1.0, false);
  CHECK(train::mwm_loss(t, t, 3).item() == 0.0);
  CHECK(train::mwm_loss(Tensor::from({1, 2}, {1, 1}), Tensor::zeros({1, 2}), 1).item() == 2.0);

  // Brute force over a 3-sample batch of 4 masked patches with 5 values each.
  double brute = 0.0, summed = 0.0;
  for (int m = 0; m < 3; ++m) {
    const Tensor a = randn({4, 5}, rng, 1.0, false);
    const Tensor b = randn({4, 5}, rng, 1.0, false);
    for (std::size_t i = 0; i < 20; ++i) brute += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
    summed += train::mwm_loss(a, b, 3).item();
  }
  CHECK(summed == doctest::Approx(brute / (3.0 * 4.0)).epsilon(1e-13));
  CHECK_THROWS(train::mwm_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}), 1));
}

TEST_CASE("reconstruction loss ignores visible patches") {
  tc::RngState rng(3);
  vit::WavesModel m(tiny(), rng);
  const auto seq = sp::patchify(randn({8, 8, 1}, rng, 1.0, false), 4);
  const auto plan = train::sample_mask(4, 0.5, rng);
  const Tensor recon = m.pretrain_forward(seq, plan);
  Tensor edited = seq.patches.clone_leaf(false);
  auto d = edited.mutable_data();
  for (auto r : plan.visible) {
    for (std::size_t k = 0; k < 16; ++k) d[r * 16 + k] = -50.0;
  }
  const double a = train::mwm_loss(tc::gather_rows(seq.patches, plan.masked), recon, 1).item();
  const double b = train::mwm_loss(tc::gather_rows(edited, plan.masked), recon, 1).item();
  CHECK(a == b);
}

TEST_CASE("smoothed cross-entropy") {
  tc::RngState rng(4);
  CHECK(train::loss_sce(Tensor::from({1, 3}, {0, 1, 0}), {1}, 0.0).item() == doctest::Approx(0.0).epsilon(1e-9));
  // Target weight for the true class with theta = 0.1 over 6 classes.
  const Tensor p = Tensor::from({1, 6}, {0.5, 0.1, 0.1, 0.1, 0.1, 0.1});
  const double l = train::loss_sce(p, {0}, 0.1).item();
  const double w_true = 0.9 + 0.1 / 6.0;
  CHECK(w_true == doctest::Approx(0.91667).epsilon(1e-5));
  CHECK(l == doctest::Approx(-(w_true * std::log(0.5) + 5 * (0.1 / 6.0) * std::log(0.1))).epsilon(1e-13));

  const Tensor probs = probs_from(randn({4, 6}, rng, 1.0, false));
  const std::vector<int> y = {0, 5, 2, 2};
  double brute = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t i = 0; i < 6; ++i) {
      const double target = (static_cast<int>(i) == y[n] ? 1.0 : 0.0) * 0.8 + 0.2 / 6.0;
      brute += target * std::log(probs.at(n * 6 + i));
    }
  }
  CHECK(train::loss_sce(probs, y, 0.2).item() == doctest::Approx(-brute / 4.0).epsilon(1e-13));
  CHECK_THROWS(train::loss_sce(probs, {0, 1, 2, 6}, 0.1));
  CHECK_THROWS(train::loss_sce(probs, y, 1.0));
}

TEST_CASE("weighted cross-entropy and class weights") {
  tc::RngState rng(5);
  const Tensor probs = probs_from(randn({5, 3}, rng, 1.0, false));
  const std::vector<int> y = {0, 1, 2, 1, 1};
  const double ce = train::loss_wce(probs, y, {1, 1, 1}).item();
  double brute = 0.0;
  for (std::size_t n = 0; n < 5; ++n) brute -= std::log(probs.at(n * 3 + static_cast<std::size_t>(y[n])));
  CHECK(ce == doctest::Approx(brute / 5.0).epsilon(1e-13));
  CHECK(train::loss_wce(probs, y, {2, 2, 2}).item() == doctest::Approx(2.0 * ce).epsilon(1e-13));

  // 10 samples: six of class 0, three of class 1, one of class 2, none of class 3.
  const std::vector<int> labels = {0, 0, 0, 0, 0, 0, 1, 1, 1, 2};
  const auto beta = train::inverse_frequency_weights(labels, 4);
  REQUIRE(beta.size() == 4);
  CHECK(beta[0] == doctest::Approx(10.0 / (4 * 6)));
  CHECK(beta[1] == doctest::Approx(10.0 / (4 * 3)));
  CHECK(beta[2] == doctest::Approx(10.0 / (4 * 1)));
  CHECK(beta[3] == 0.0);
  CHECK_THROWS(train::loss_wce(probs, y, {1, -1, 1}));
  CHECK_THROWS(train::loss_wce(probs, y, {1, 1}));
}

TEST_CASE("position loss") {
  tc::RngState rng(6);
  const Tensor a = randn({4, 3}, rng, 1.0, false);
  CHECK(train::loss_mse_position(a, a).item() == 0.0);
  CHECK(train::loss_mse_position(Tensor::from({1, 3}, {1, 0, 0}), Tensor::zeros({1, 3})).item() == 1.0);
  const Tensor b = randn({4, 3}, rng, 1.0, false);
  double brute = 0.0;
  for (std::size_t i = 0; i < 12; ++i) brute += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  CHECK(train::loss_mse_position(a, b).item() == doctest::Approx(brute / 4.0).epsilon(1e-13));
  CHECK_THROWS(train::loss_mse_position(a, Tensor::zeros({4, 2})));
}

TEST_CASE("SNR weight") {
  const auto printed = [](long double s) { return 10.6L * std::exp(0.226L * s) - 0.764L; };
  CHECK(train::snr_weight(0.0) == doctest::Approx(9.836).epsilon(1e-3 / 9.836));
  const double ratio = train::snr_weight(20.0) / train::snr_weight(0.0);
  CHECK(std::abs(ratio - 98.9) <= 0.5);
  CHECK(std::abs(ratio - static_cast<double>(printed(20) / printed(0))) < 1e-12);

  // Bisection root of the printed formula.
  double lo = -20.0, hi = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (train::snr_weight_unclamped(mid) < 0.0 ? lo : hi) = mid;
  }
  CHECK(std::abs(lo - (-11.64)) < 0.01);
  CHECK(train::snr_weight(-12.0) == 0.01);
  CHECK(train::snr_weight(-20.0) == 0.01);
  CHECK(train::snr_weight_unclamped(-20.0) < 0.0);
  // The printed constants give a 20 dB vs -10 dB ratio far from 100.
  const double r10 = train::snr_weight(20.0) / train::snr_weight(-10.0);
  CHECK(r10 == doctest::Approx(static_cast<double>(printed(20) / printed(-10))));
  CHECK(r10 > 2000.0);
}

TEST_CASE("SNR-weighted channel loss") {
  tc::RngState rng(7);
  std::vector<Tensor> p, t;
  for (int i = 0; i < 3; ++i) {
    p.push_back(randn({2, 3, 2}, rng, 1.0, false));
    t.push_back(randn({2, 3, 2}, rng, 1.0, false));
  }
  const std::vector<double> snr = {-5.0, 3.0, 17.0};
  CHECK(train::loss_snr_mse(p, p, snr).item() == 0.0);
  double brute = 0.0, unit = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    double sq = 0.0;
    for (std::size_t i = 0; i < 12; ++i) sq += (p[n].at(i) - t[n].at(i)) * (p[n].at(i) - t[n].at(i));
    brute += train::snr_weight(snr[n]) * sq;
    unit += sq;
  }
  CHECK(train::loss_snr_mse(p, t, snr).item() == doctest::Approx(brute / 3.0).epsilon(1e-13));
  train::SnrWeightConfig flat{0.0, 0.0, -1.0, 0.01};
  CHECK(train::loss_snr_mse(p, t, snr, flat).item() == doctest::Approx(unit / 3.0).epsilon(1e-13));
  CHECK_THROWS(train::loss_snr_mse(p, t, {1.0, 2.0}));
}

TEST_CASE("task losses pass finite-difference checks") {
  tc::RngState rng(8);
  const std::vector<int> y = {2, 0, 1};
  CHECK(testutil::grad_check([&](const std::vector<Tensor>& in) { return train::loss_sce(tc::softmax_rows(in[0]), y, 0.1); },
                             {randn({3, 4}, rng)}) < 1e-6);
  CHECK(testutil::grad_check([&](const std::vector<Tensor>& in) {
          return train::loss_wce(tc::softmax_rows(in[0]), y, {0.5, 2.0, 1.0, 3.0});
        }, {randn({3, 4}, rng)}) < 1e-6);
  CHECK(testutil::grad_check([&](const std::vector<Tensor>& in) { return train::loss_mse_position(in[0], in[1]); },
                             {randn({3, 3}, rng), randn({3, 3}, rng)}) < 1e-6);
  CHECK(testutil::grad_check([&](const std::vector<Tensor>& in) {
          return train::loss_snr_mse({in[0], in[1]}, {in[2], in[3]}, {0.0, 10.0});
        }, {randn({2, 2, 2}, rng), randn({2, 2, 2}, rng), randn({2, 2, 2}, rng), randn({2, 2, 2}, rng)}) < 1e-6);
  CHECK(testutil::grad_check([&](const std::vector<Tensor>& in) { return train::mwm_loss(in[0], in[1], 2); },
                             {randn({3, 5}, rng), randn({3, 5}, rng)}) < 1e-6);
}

TEST_CASE("learning-rate schedule") {
  train::Schedule s{1e-3, 40, 800};
  CHECK(s.lr_at(0) == 0.0);
  CHECK(s.lr_at(40) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(s.lr_at(20) == doctest::Approx(5e-4));
  CHECK(std::abs(s.lr_at(800)) <= 1e-12);
  CHECK(std::abs(s.lr_at(799)) < 1e-8);
  CHECK(std::abs(s.lr_at(40) - (1e-3 * 39.0 / 40.0)) < 1e-3 / 40.0 + 1e-15);
  // Continuity: the ramp extended to the junction meets the cosine start.
  const double ramp_end = s.base_lr * 40.0 / 40.0;
  CHECK(std::abs(ramp_end - s.lr_at(40)) < 1e-12 * s.base_lr);
  for (std::size_t k = 41; k < 800; ++k) CHECK(s.lr_at(k) <= s.lr_at(k - 1));

  auto cfg = train::pretrain_defaults();
  const auto sched = train::make_schedule(cfg, 3);
  CHECK(sched.warmup_steps == 120);
  CHECK(sched.total_steps == 2400);
  cfg.warmup_epochs = cfg.epochs;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("layer-wise decay") {
  CHECK(train::layer_lr_scale("encoder.block1.msa.qkv", 12, 0.75) == doctest::Approx(std::pow(0.75, 11)));
  CHECK(std::pow(0.75, 11) == doctest::Approx(0.0422).epsilon(1e-3));
  CHECK(train::layer_lr_scale("encoder.block12.mlp.fc1.weight", 12, 0.75) == 1.0);
  CHECK(train::layer_lr_scale("head.linear.weight", 12, 0.75) == 1.0);
  CHECK(train::layer_lr_scale("encoder.patch_embed", 12, 0.75) == doctest::Approx(std::pow(0.75, 12)));
  CHECK(train::layer_depth("encoder.block7.ln1.scale", 12) == 7);
  CHECK(train::layer_depth("head.norm.shift", 12) == 13);
  CHECK(train::layer_lr_scale("encoder.block3.msa.qkv", 12, 1.0) == 1.0);
}

TEST_CASE("Adam") {
  SUBCASE("hand-rolled scalar trace") {
    train::OptimConfig cfg;
    cfg.weight_decay = 0.0;
    train::Adam adam(cfg);
    tc::ParameterStore ps;
    ps.add("w", Tensor::from({1, 1}, {1.5}, true));
    const double lr = 0.1;
    double w = 1.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      ps.zero_grad();
      const Tensor& p = ps.get("w");
      tc::backward(tc::sum(tc::mul(p, p)));
      const double g = 2.0 * w;
      CHECK(p.grad()[0] == doctest::Approx(g).epsilon(1e-15));
      adam.step(ps, lr);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      w -= lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(ps.get("w").item() == doctest::Approx(w).epsilon(1e-14));
    }
    CHECK(adam.steps() == 3);
  }
  SUBCASE("zero gradient without decay changes nothing") {
    train::OptimConfig cfg;
    cfg.weight_decay = 0.0;
    train::Adam adam(cfg);
    tc::ParameterStore ps;
    Tensor& w = ps.add("w", Tensor::from({2, 2}, {1, 2, 3, 4}, true));
    w.mutable_grad();
    ps.zero_grad();
    adam.step(ps, 0.1);
    CHECK(ps.get("w").data()[3] == 4.0);
    CHECK(ps.get("w").data()[0] == 1.0);
  }
  SUBCASE("decoupled weight decay on matrices only") {
    train::OptimConfig cfg;
    cfg.weight_decay = 0.05;
    train::Adam adam(cfg);
    tc::ParameterStore ps;
    ps.add("mat", Tensor::from({1, 2}, {1.0, -2.0}, true)).mutable_grad();
    ps.add("bias", Tensor::from({2}, {1.0, -2.0}, true)).mutable_grad();
    ps.zero_grad();
    const double lr = 0.01;
    for (int k = 0; k < 3; ++k) adam.step(ps, lr);
    const double f = std::pow(1.0 - lr * 0.05, 3);
    CHECK(ps.get("mat").at(0) == doctest::Approx(f).epsilon(1e-14));
    CHECK(ps.get("mat").at(1) == doctest::Approx(-2.0 * f).epsilon(1e-14));
    CHECK(ps.get("bias").at(0) == 1.0);
  }
  SUBCASE("non-finite gradient aborts the step") {
    train::Adam adam;
    tc::ParameterStore ps;
    ps.add("a", Tensor::from({1, 2}, {1.0, 2.0}, true)).mutable_grad()[0] = 0.5;
    ps.add("b", Tensor::from({2}, {3.0, 4.0}, true)).mutable_grad()[1] = std::numeric_limits<double>::quiet_NaN();
    const auto before = checksums(ps);
    CHECK_THROWS_AS(adam.step(ps, 0.1), tc::NumericError);
    CHECK(checksums(ps) == before);
    CHECK(adam.steps() == 0);
  }
  SUBCASE("frozen tensors are skipped") {
    train::Adam adam;
    tc::ParameterStore ps;
    ps.add("f", Tensor::from({1, 2}, {1.0, 2.0}, false));
    adam.step(ps, 0.1);
    CHECK(ps.get("f").at(1) == 2.0);
  }
}

TEST_CASE("pre-training loop") {
  tc::RngState data_rng(9);
  const auto data = patch_set(8, data_rng);
  auto cfg = train::pretrain_defaults();
  cfg.batch_size = 8;
  cfg.mask_ratio = 0.5;
  cfg.warmup_epochs = 0;

  SUBCASE("zero learning rate keeps parameters bit-identical") {
    tc::RngState rng(10);
    vit::WavesModel m(tiny(), rng);
    const auto before = m.params().checksum();
    cfg.lr = 0.0;
    cfg.epochs = 3;
    auto st = train::make_train_state(cfg, data.size());
    cfg.weight_decay = 0.0;
    st.adam = train::Adam(cfg);
    for (int e = 0; e < 3; ++e) train::pretrain_epoch(data, m, st, rng);
    CHECK(m.params().checksum() == before);
  }
  SUBCASE("memorises eight samples within 200 steps") {
    tc::RngState rng(11);
    const auto tiled = tiled_set(8, rng);
    vit::WavesModel m(tiny(2, 16), rng);
    cfg.lr = 1e-2;
    cfg.epochs = 200;
    auto st = train::make_train_state(cfg, tiled.size());
    std::vector<double> losses;
    for (int e = 0; e < 200; ++e) losses.push_back(train::pretrain_epoch(tiled, m, st, rng).loss);
    CHECK(st.step == 200);
    MESSAGE("first-step loss " << losses.front() << ", last-step loss " << losses.back());
    CHECK(losses.back() <= 0.5 * losses.front());
  }
  SUBCASE("same seed gives the same loss trace") {
    const auto trace = [&] {
      tc::RngState rng(14);
      vit::WavesModel m(tiny(), rng);
      cfg.lr = 1e-3;
      cfg.epochs = 4;
      auto st = train::make_train_state(cfg, data.size());
      std::vector<double> out;
      for (int e = 0; e < 4; ++e) {
        const auto em = train::pretrain_epoch(data, m, st, rng);
        out.insert(out.end(), em.batch_losses.begin(), em.batch_losses.end());
      }
      return out;
    };
    CHECK(trace() == trace());
  }
  SUBCASE("refuses a fine-tuning model") {
    tc::RngState rng(15);
    vit::WavesModel m(tiny(), rng, false);
    auto st = train::make_train_state(cfg, data.size());
    CHECK_THROWS(train::pretrain_epoch(data, m, st, rng));
  }
}

TEST_CASE("freezing contracts") {
  tc::RngState data_rng(16);
  const auto data = labelled_set(10, 6, data_rng);
  const auto run = [&](const train::FreezePolicy& policy) {
    tc::RngState rng(17);
    vit::WavesModel m(tiny(12), rng, false);
    m.attach_head(vit::default_head(vit::TaskKind::kSensing), rng);
    if (policy.mode == train::FreezeMode::kLora) m.attach_lora(policy.lora, rng);
    const auto before = checksums(m.params());
    auto st = train::make_train_state(quick_optim(1e-2, 1, 10), data.size());
    train::finetune_epoch(data, m, policy, {}, st, rng);
    CHECK(st.step == 10);
    std::map<std::string, bool> changed;
    for (const auto& e : m.params()) changed[e.name] = tc::tensor_checksum(e.tensor) != before.at(e.name);
    return std::make_pair(changed, train::sharing_report(m));
  };

  SUBCASE("head only") {
    const auto [changed, rep] = run(train::FreezePolicy::head_only());
    for (const auto& [name, c] : changed) CHECK_MESSAGE(c == head_side(name), name);
    CHECK(rep.shared_fraction() == 1.0);
  }
  SUBCASE("last two of twelve blocks") {
    const auto [changed, rep] = run(train::FreezePolicy::last_n_blocks(2));
    for (const auto& [name, c] : changed) {
      const bool allowed = head_side(name) || name.rfind("encoder.block11.", 0) == 0 ||
                           name.rfind("encoder.block12.", 0) == 0;
      CHECK_MESSAGE(c == allowed, name);
    }
    // Every block has the same size, so ten of twelve stay shared up to the
    // patch embedding share.
    CHECK(rep.shared_fraction() > 10.0 / 12.0 - 0.01);
    CHECK(rep.shared_fraction() < 1.0);
  }
  SUBCASE("LoRA adapters") {
    const auto [changed, rep] = run(train::FreezePolicy::with_lora({2, 1.0, 0.02}));
    for (const auto& [name, c] : changed) {
      CHECK_MESSAGE(c == (head_side(name) || vit::is_lora_param(name)), name);
    }
    CHECK(rep.shared_fraction() == 1.0);
  }
  SUBCASE("full fine-tuning updates the whole encoder") {
    const auto [changed, rep] = run(train::FreezePolicy::full());
    for (const auto& [name, c] : changed) CHECK_MESSAGE(c, name);
    CHECK(rep.shared_fraction() == 0.0);
  }
  CHECK_FALSE(train::is_trainable("encoder.block10.msa.qkv", train::FreezePolicy::last_n_blocks(2), 12));
  CHECK(train::is_trainable("encoder.block11.msa.qkv", train::FreezePolicy::last_n_blocks(2), 12));
  CHECK_THROWS(train::is_trainable("encoder.block1.msa.qkv", train::FreezePolicy::last_n_blocks(13), 12));
  for (auto mode : {train::FreezeMode::kHeadOnly, train::FreezeMode::kLastNBlocks, train::FreezeMode::kLora,
                    train::FreezeMode::kFull}) {
    CHECK(train::parse_freeze_mode(train::freeze_mode_name(mode)) == mode);
  }
}

TEST_CASE("fine-tuning reduces the task loss") {
  tc::RngState rng(18);
  auto data = labelled_set(12, 3, rng);
  for (auto& s : data) {
    // Make the class visible as a mean offset.
    for (auto& v : s.data.mutable_data()) v += 2.0 * (*s.label - 1);
  }
  vit::WavesModel m(tiny(), rng, false);
  m.attach_head(vit::default_head(vit::TaskKind::kSensing), rng);
  auto st = train::make_train_state(quick_optim(1e-2, 4, 30), data.size());
  const auto policy = train::FreezePolicy::last_n_blocks(2);
  const double first = train::finetune_epoch(data, m, policy, {}, st, rng).loss;
  double last = first;
  for (int e = 1; e < 30; ++e) last = train::finetune_epoch(data, m, policy, {}, st, rng).loss;
  CHECK(last < 0.5 * first);
  const Tensor p = train::task_predict(m, data[0]);
  CHECK(p.shape() == tc::Shape{6});
  double s = 0.0;
  for (double v : p.data()) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("task loss requires matching annotations") {
  sp::GridSample s;
  s.data = Tensor::zeros({8, 8, 1});
  const auto out = Tensor::zeros({1, 6});
  CHECK_THROWS(train::task_loss(vit::default_head(vit::TaskKind::kSensing), out, s, {}, 1));
  CHECK_THROWS(train::task_loss(vit::default_head(vit::TaskKind::kPositioning), Tensor::zeros({1, 3}), s, {}, 1));
  s.position = std::array<double, 3>{1.0, 2.0, 2.0};
  CHECK(train::task_loss(vit::default_head(vit::TaskKind::kPositioning), Tensor::zeros({1, 3}), s, {}, 1).item() ==
        doctest::Approx(9.0));
}

TEST_CASE("optimizer config round trip") {
  auto c = train::finetune_defaults();
  CHECK(c.epochs == 200);
  CHECK(c.warmup_epochs == 10);
  CHECK(c.layer_decay == 0.75);
  const auto p = train::pretrain_defaults();
  CHECK(p.epochs == 800);
  CHECK(p.warmup_epochs == 40);
  CHECK(p.mask_ratio == 0.75);
  CHECK(p.batch_size == 256);
  CHECK(p.weight_decay == 0.05);
  c.lr = 3e-3;
  CHECK(train::to_json(train::optim_config_from_json(train::to_json(c), train::pretrain_defaults())) ==
        train::to_json(c));
}
