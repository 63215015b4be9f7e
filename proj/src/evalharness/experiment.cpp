#include "wavesfm/evalharness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wavesfm/evalharness/checkpoint.hpp"
#include "wavesfm/evalharness/metrics.hpp"
#include "wavesfm/signalpipe/archive.hpp"
#include "wavesfm/signalpipe/patch.hpp"
#include "wavesfm/signalpipe/pipeline.hpp"
#include "wavesfm/tensorcore/parallel.hpp"
#include "wavesfm/wavesim/ofdm.hpp"

namespace wavesfm::eval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kFinetune: return "finetune";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kSimulate: return "simulate";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kPretrain, Stage::kFinetune, Stage::kEvaluate, Stage::kSimulate}) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage: " + std::string(name));
}

namespace {

json freeze_json(const train::FreezePolicy& p) {
  return {{"mode", train::freeze_mode_name(p.mode)}, {"last_n", p.last_n}, {"lora", vit::to_json(p.lora)}};
}

json augment_json(const sp::AugmentPolicy& a) {
  return {{"enabled", a.enabled},         {"min_area", a.min_area},     {"max_area", a.max_area},
          {"min_aspect", a.min_aspect},   {"max_aspect", a.max_aspect}, {"flip_spectrograms", a.flip_spectrograms}};
}

sp::AugmentPolicy augment_from_json(const json& j) {
  sp::AugmentPolicy a;
  a.enabled = j.value("enabled", a.enabled);
  a.min_area = j.value("min_area", a.min_area);
  a.max_area = j.value("max_area", a.max_area);
  a.min_aspect = j.value("min_aspect", a.min_aspect);
  a.max_aspect = j.value("max_aspect", a.max_aspect);
  a.flip_spectrograms = j.value("flip_spectrograms", a.flip_spectrograms);
  return a;
}

json task_json(const TaskConfig& t) {
  return {{"kind", vit::task_name(t.kind)},
          {"outputs", t.outputs},
          {"smoothing", t.loss.smoothing},
          {"class_weights", t.loss.class_weights},
          {"snr_weight",
           {{"gain", t.loss.snr.gain}, {"rate", t.loss.snr.rate}, {"offset", t.loss.snr.offset}, {"floor", t.loss.snr.floor}}}};
}

TaskConfig task_from_json(const json& j) {
  TaskConfig t;
  t.kind = vit::parse_task(j.value("kind", std::string(vit::task_name(t.kind))));
  t.outputs = j.value("outputs", t.outputs);
  t.loss.smoothing = j.value("smoothing", t.loss.smoothing);
  t.loss.class_weights = j.value("class_weights", t.loss.class_weights);
  if (j.contains("snr_weight")) {
    const auto& w = j.at("snr_weight");
    t.loss.snr.gain = w.value("gain", t.loss.snr.gain);
    t.loss.snr.rate = w.value("rate", t.loss.snr.rate);
    t.loss.snr.offset = w.value("offset", t.loss.snr.offset);
    t.loss.snr.floor = w.value("floor", t.loss.snr.floor);
  }
  return t;
}

json eval_json(const EvalConfig& e) {
  return {{"covariance_draws", e.covariance_draws}, {"snr_lo_db", e.snr_lo_db},     {"snr_hi_db", e.snr_hi_db},
          {"snr_step_db", e.snr_step_db},           {"histogram_bins", e.histogram_bins}};
}

EvalConfig eval_from_json(const json& j) {
  EvalConfig e;
  e.covariance_draws = j.value("covariance_draws", e.covariance_draws);
  e.snr_lo_db = j.value("snr_lo_db", e.snr_lo_db);
  e.snr_hi_db = j.value("snr_hi_db", e.snr_hi_db);
  e.snr_step_db = j.value("snr_step_db", e.snr_step_db);
  e.histogram_bins = j.value("histogram_bins", e.histogram_bins);
  return e;
}

// Every key of `input` must appear in the canonical re-serialization.
void reject_unknown_keys(const json& input, const json& canonical, const std::string& path) {
  if (!input.is_object() || !canonical.is_object()) return;
  for (auto it = input.begin(); it != input.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!canonical.contains(it.key())) throw ConfigError("unknown config key: " + key);
    reject_unknown_keys(it.value(), canonical.at(it.key()), key);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

class Logger {
 public:
  explicit Logger(const RunOptions& o) : log_(o.log) {}
  void operator()(const std::string& s) const {
    if (log_) log_(s);
  }

 private:
  std::function<void(const std::string&)> log_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// --- data ------------------------------------------------------------------

struct Data {
  sp::Archive archive;
  sim::DatasetSpec spec;   // generator description, from the archive when present
  std::vector<sp::GridSample> train, val;
};

Data load_data(const ExperimentConfig& cfg, std::size_t threads) {
  Data d;
  if (!cfg.data.archive.empty()) {
    d.archive = sp::read_archive(cfg.data.archive);
    d.spec = (d.archive.generator.is_object() && d.archive.generator.contains("kind"))
                 ? sim::dataset_spec_from_json(d.archive.generator)
                 : cfg.data.spec;
  } else {
    d.archive = sim::generate_dataset(cfg.data.spec, cfg.data.seed, threads);
    d.spec = cfg.data.spec;
  }
  const std::size_t n = d.archive.samples.size();
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.data.val_fraction * static_cast<double>(n)));
  if (cfg.data.val_fraction > 0.0) n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= n) throw ConfigError("data: validation split leaves no training samples");
  d.train.assign(d.archive.samples.begin(), d.archive.samples.end() - static_cast<std::ptrdiff_t>(n_val));
  d.val.assign(d.archive.samples.end() - static_cast<std::ptrdiff_t>(n_val), d.archive.samples.end());
  for (const auto& s : d.archive.samples) {
    if (s.channels() != cfg.model.channels) {
      throw ConfigError("model.channels is " + std::to_string(cfg.model.channels) + " but the data has " +
                        std::to_string(s.channels()) + " channels");
    }
  }
  return d;
}

std::vector<tc::Tensor> grids_of(const std::vector<sp::GridSample>& v) {
  std::vector<tc::Tensor> g;
  g.reserve(v.size());
  for (const auto& s : v) g.push_back(s.data);
  return g;
}

std::vector<sp::GridSample> apply_all(const sp::FittedPipeline& p, const std::vector<sp::GridSample>& v,
                                      std::size_t threads) {
  std::vector<sp::GridSample> out(v.size());
  tc::parallel_for(v.size(), [&](std::size_t i) { out[i] = p.apply(v[i]); }, threads);
  return out;
}

// --- run directory -----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val = 0.0;
  double lr = 0.0;
  std::size_t step = 0;

  json to_json(const std::string& val_name) const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {val_name, val}, {"lr", lr}, {"step", step}};
  }
};

class RunDir {
 public:
  explicit RunDir(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    jsonl_.open(root_ / "metrics.jsonl", std::ios::trunc);
  }
  const fs::path& root() const { return root_; }
  fs::path checkpoint(const std::string& name) const { return root_ / "checkpoints" / name; }

  void record(const EpochRecord& r, const std::string& val_name) {
    records_.push_back(r);
    jsonl_ << r.to_json(val_name).dump() << '\n';
    jsonl_.flush();
  }
  void write_epochs_csv(const std::string& val_name) const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss," << val_name << ",lr,step\n";
    for (const auto& r : records_) os << r.epoch << ',' << r.train_loss << ',' << r.val << ',' << r.lr << ',' << r.step << '\n';
    write_text(root_ / "epochs.csv", os.str());
  }
  json records_json(const std::string& val_name) const {
    json a = json::array();
    for (const auto& r : records_) a.push_back(r.to_json(val_name));
    return a;
  }
  std::vector<double> val_series() const {
    std::vector<double> v;
    for (const auto& r : records_) v.push_back(r.val);
    return v;
  }

 private:
  fs::path root_;
  std::ofstream jsonl_;
  std::vector<EpochRecord> records_;
};

std::string epoch_name(std::size_t e) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch-%04zu", e);
  return buf;
}

// --- task scoring -------------------------------------------------------------

struct Score {
  std::string name;
  double value = 0.0;
  bool higher_is_better = true;
  json detail;
  std::vector<std::pair<std::string, std::string>> csv;
  std::vector<json> dumps;
  std::vector<tc::Tensor> grids;
};

std::size_t antennas_of(const sim::DatasetSpec& spec) { return spec.ofdm.n_rx_antennas; }

Score score_task(const vit::WavesModel& model, const std::vector<sp::GridSample>& processed,
                 const std::vector<sp::GridSample>& raw, const ExperimentConfig& cfg, const sim::DatasetSpec& dspec,
                 bool full, std::size_t threads) {
  const auto& head = *model.head();
  const std::size_t n = processed.size();
  std::vector<tc::Tensor> out(n);
  tc::parallel_for(n, [&](std::size_t i) { out[i] = train::task_predict(model, processed[i]); }, threads);

  Score s;
  if (head.is_classification()) {
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(argmax(out[i].data()));
      labels[i] = *raw[i].label;
    }
    const auto r = classification_metrics(preds, labels, head.outputs);
    s.name = "mean_per_class_accuracy";
    s.value = r.mean_per_class_accuracy;
    s.higher_is_better = true;
    if (!full) return s;
    s.detail = r.to_json();
    s.csv.emplace_back("confusion.csv", r.confusion_csv());
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = out[i].data();
      s.dumps.push_back({{"sample_id", raw[i].sample_id},
                         {"label", labels[i]},
                         {"pred", preds[i]},
                         {"probs", std::vector<double>(d.begin(), d.end())}});
    }
    return s;
  }

  if (head.kind == vit::TaskKind::kPositioning) {
    std::vector<Vec3> preds(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = out[i].data();
      preds[i] = {d[0], d[1], d[2]};
      targets[i] = *raw[i].position;
    }
    const auto r = positioning_metrics(preds, targets, cfg.eval.histogram_bins);
    s.name = "mean_error";
    s.value = r.mean;
    s.higher_is_better = false;
    if (!full) return s;
    s.detail = r.to_json();
    s.csv.emplace_back("position_errors.csv", r.histogram_csv());
    for (std::size_t i = 0; i < n; ++i) {
      s.dumps.push_back({{"sample_id", raw[i].sample_id}, {"target", targets[i]}, {"pred", preds[i]}, {"error", r.errors[i]}});
    }
    return s;
  }

  const std::size_t antennas = antennas_of(dspec);
  std::vector<double> model_err(n), snr(n);
  for (std::size_t i = 0; i < n; ++i) {
    model_err[i] = sim::grid_mse(sim::tensor_to_csi(out[i], antennas), sim::tensor_to_csi(raw[i].target, antennas));
    snr[i] = raw[i].snr_db.value_or(0.0);
  }
  double mean = 0.0;
  for (double e : model_err) mean += e;
  s.name = "mse";
  s.value = n ? mean / static_cast<double>(n) : 0.0;
  s.higher_is_better = false;
  if (!full) return s;

  // Idealized baselines from the raw pilots, with the true SNR and
  // covariances estimated from simulator draws.
  const auto& ocfg = dspec.ofdm;
  tc::RngState cov_rng(cfg.data.seed, 5);
  const auto cov = sim::estimate_covariance(ocfg, cfg.eval.covariance_draws, cov_rng);
  std::vector<double> ls_err(n), lmmse_err(n);
  tc::parallel_for(
      n,
      [&](std::size_t i) {
        const auto [tx, rx] = sim::unpack_chanest_input(raw[i].data, antennas);
        const auto h = sim::tensor_to_csi(raw[i].target, antennas);
        const auto ls = sim::ls_estimate(tx, rx, ocfg.pilot_symbols);
        ls_err[i] = sim::grid_mse(sim::interpolate_pilots(ls, ocfg.pilot_symbols, ocfg.n_symbols), h);
        lmmse_err[i] = sim::grid_mse(sim::lmmse_estimate(ls, cov, sim::noise_variance(snr[i]), ocfg.pilot_symbols), h);
      },
      threads);
  const auto table = mse_vs_snr({{"model", model_err}, {"ls", ls_err}, {"lmmse", lmmse_err}}, snr,
                                snr_bin_edges(cfg.eval.snr_lo_db, cfg.eval.snr_hi_db, cfg.eval.snr_step_db));
  s.detail = {{"mse", s.value}, {"mse_vs_snr", table.to_json()}};
  s.csv.emplace_back("mse_vs_snr.csv", table.to_csv());
  for (std::size_t i = 0; i < n; ++i) {
    s.dumps.push_back({{"sample_id", raw[i].sample_id},
                       {"snr_db", snr[i]},
                       {"mse_model", model_err[i]},
                       {"mse_ls", ls_err[i]},
                       {"mse_lmmse", lmmse_err[i]}});
    s.grids.push_back(out[i]);
  }
  return s;
}

void write_score(const fs::path& root, Score& s, bool dump) {
  for (const auto& [name, text] : s.csv) write_text(root / name, text);
  if (!dump) return;
  std::ofstream os(root / "predictions.jsonl", std::ios::trunc);
  if (!s.grids.empty()) fs::create_directories(root / "preds");
  for (std::size_t i = 0; i < s.dumps.size(); ++i) {
    if (i < s.grids.size()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "preds/%05zu.wfm", i);
      sp::write_tensor_file(root / buf, s.grids[i], sp::DType::kFloat64);
      s.dumps[i]["grid"] = buf;
    }
    os << s.dumps[i].dump() << '\n';
  }
}

// --- stages -------------------------------------------------------------------


double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json checkpoint_extra(const ExperimentConfig& cfg, const sp::FittedPipeline& pipe, std::size_t epoch) {
  return {{"stage", stage_name(cfg.stage)}, {"config", to_json(cfg)}, {"pipeline", pipe.to_json()}, {"epoch", epoch}};
}

RunResult run_pretrain(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const Logger log(opts);
  RunDir dir(cfg.out_dir);
  Data data = load_data(cfg, opts.threads);
  const sp::Modality modality = data.train.front().modality;
  if (modality == sp::Modality::kSpectrogram && data.spec.db_scale) {
    throw ConfigError("pre-training takes linear-magnitude spectrograms; set data.spec.db_scale to false");
  }
  const auto pipe = sp::FittedPipeline::fit(sp::pretrain_pipeline(modality, cfg.model.image_size), grids_of(data.train));
  const auto train_proc = apply_all(pipe, data.train, opts.threads);
  const auto& val_src = data.val.empty() ? data.train : data.val;
  std::vector<sp::PatchSeq> train_p, val_p;
  for (const auto& s : train_proc) train_p.push_back(sp::patchify(s.data, cfg.model.patch));
  for (const auto& s : apply_all(pipe, val_src, opts.threads)) val_p.push_back(sp::patchify(s.data, cfg.model.patch));

  tc::RngState init_rng(cfg.seed, 1);
  vit::WavesModel model(cfg.model, init_rng, true);
  auto state = train::make_train_state(cfg.optim, train_p.size());
  if (!cfg.init_checkpoint.empty()) {
    const auto ckpt = load_checkpoint(cfg.init_checkpoint);
    model = restore_model(ckpt, cfg.model);
    restore_train_state(ckpt, state);
  }
  const auto eval_loss = [&] {
    tc::RngState r(cfg.seed, 4);
    return train::pretrain_eval_loss(val_p, model, cfg.optim.mask_ratio, r);
  };
  const double initial = eval_loss();
  log("pretrain: initial val loss " + fmt("%.6g", initial));

  std::vector<double> trace;
  std::string last_ckpt;
  sp::AugmentPolicy aug = cfg.augment;
  aug.image_size = cfg.model.image_size;
  json report = {{"stage", "pretrain"}, {"seed", cfg.seed}, {"initial_val_loss", initial}};
  try {
    for (std::size_t e = state.epoch; e < cfg.optim.epochs; ++e) {
      tc::RngState rng = tc::RngState(cfg.seed, 2).split(e);
      train::EpochMetrics m;
      if (aug.enabled) {
        const tc::RngState aug_rng = tc::RngState(cfg.seed, 6).split(e);
        std::vector<sp::PatchSeq> epoch_p(train_proc.size());
        for (std::size_t i = 0; i < train_proc.size(); ++i) {
          tc::RngState r = aug_rng.split(i);
          epoch_p[i] = sp::patchify(sp::augment(train_proc[i], r, aug).data, cfg.model.patch);
        }
        m = train::pretrain_epoch(epoch_p, model, state, rng);
      } else {
        m = train::pretrain_epoch(train_p, model, state, rng);
      }
      if (!std::isfinite(m.loss)) throw tc::NumericError("non-finite training loss at epoch " + std::to_string(e + 1));
      trace.insert(trace.end(), m.batch_losses.begin(), m.batch_losses.end());
      state.epoch = e + 1;
      const double val = eval_loss();
      if (!std::isfinite(val)) throw tc::NumericError("non-finite validation loss at epoch " + std::to_string(e + 1));
      dir.record({e + 1, m.loss, val, m.lr, state.step}, "val_loss");
      log("pretrain: epoch " + std::to_string(e + 1) + " loss " + fmt("%.6g", m.loss) + " val " + fmt("%.6g", val));
      const bool last = e + 1 == cfg.optim.epochs;
      if (last || (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0)) {
        const auto path = dir.checkpoint(last ? "final" : epoch_name(e + 1));
        save_checkpoint(path, model, &state, checkpoint_extra(cfg, pipe, e + 1));
        last_ckpt = path.string();
      }
    }
  } catch (const tc::NumericError& err) {
    report["status"] = "diverged";
    report["error"] = err.what();
    report["last_checkpoint"] = last_ckpt.empty() ? json(nullptr) : json(last_ckpt);
    report["epochs"] = dir.records_json("val_loss");
    write_json(dir.root() / "report.json", report);
    return {kExitDiverged, std::string("numeric divergence: ") + err.what(), report};
  }

  const auto vals = dir.val_series();
  const double final_loss = vals.empty() ? initial : vals.back();
  report["status"] = "ok";
  report["final_val_loss"] = final_loss;
  report["loss_ratio"] = initial > 0.0 ? final_loss / initial : 0.0;
  report["steps"] = state.step;
  report["epochs"] = dir.records_json("val_loss");
  report["convergence_epoch"] = vals.empty() ? json(nullptr) : json(convergence_epoch(vals, false) + 1 + (state.epoch - vals.size()));
  report["loss_trace"] = trace;
  report["checkpoint"] = last_ckpt;
  report["runtime_s"] = seconds_since(t0);
  dir.write_epochs_csv("val_loss");
  {
    std::ostringstream os;
    os.precision(17);
    os << "step,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) os << i + 1 << ',' << trace[i] << '\n';
    write_text(dir.root() / "loss_trace.csv", os.str());
  }
  write_json(dir.root() / "report.json", report);
  return {kExitOk, "pretrain finished", report};
}

vit::TaskHeadSpec head_for(const ExperimentConfig& cfg, const Data& data) {
  vit::TaskHeadSpec h = vit::default_head(cfg.task.kind);
  const auto& s0 = data.train.front();
  switch (cfg.task.kind) {
    case vit::TaskKind::kSensing:
    case vit::TaskKind::kRfClass: {
      h.outputs = cfg.task.outputs ? cfg.task.outputs : data.spec.num_classes();
      for (const auto& s : data.archive.samples) {
        if (!s.label) throw ConfigError("classification task on samples without labels");
        if (*s.label < 0 || static_cast<std::size_t>(*s.label) >= h.outputs) {
          throw ConfigError("label " + std::to_string(*s.label) + " does not fit a head with " +
                            std::to_string(h.outputs) + " outputs");
        }
      }
      break;
    }
    case vit::TaskKind::kPositioning:
      if (cfg.task.outputs && cfg.task.outputs != 3) throw ConfigError("positioning heads have 3 outputs");
      for (const auto& s : data.archive.samples) {
        if (!s.position) throw ConfigError("positioning task on samples without positions");
      }
      h.outputs = 3;
      break;
    case vit::TaskKind::kChanEst:
      if (!s0.target.defined() || s0.modality != sp::Modality::kOfdmGrid) {
        throw ConfigError("channel estimation needs OFDM samples with channel targets");
      }
      h.target_height = s0.target.dim(0);
      h.target_width = s0.target.dim(1);
      h.target_channels = s0.target.dim(2);
      break;
  }
  return h;
}

sp::PipelineSpec task_pipeline(vit::TaskKind kind, std::size_t image) {
  return kind == vit::TaskKind::kChanEst ? sp::chanest_pipeline(image) : sp::finetune_pipeline(image);
}

RunResult run_finetune_once(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const Logger log(opts);
  RunDir dir(cfg.out_dir);
  Data data = load_data(cfg, opts.threads);
  if (data.val.empty()) throw ConfigError("fine-tuning needs a validation split (data.val_fraction > 0)");
  const auto head = head_for(cfg, data);

  vit::WavesModel model;
  if (!cfg.init_checkpoint.empty()) {
    const auto ckpt = load_checkpoint(cfg.init_checkpoint);
    if (ckpt.head) throw ConfigError("init_checkpoint already carries a task head; fine-tuning starts from a backbone");
    model = restore_model(ckpt, cfg.model);
    model.drop_decoder();
  } else {
    tc::RngState init_rng(cfg.seed, 1);
    model = vit::WavesModel(cfg.model, init_rng, false);
  }
  tc::RngState head_rng(cfg.seed, 3);
  model.attach_head(head, head_rng);
  if (cfg.freeze.mode == train::FreezeMode::kLora) model.attach_lora(cfg.freeze.lora, head_rng);
  const auto backbone_sum = model.params().checksum([](const tc::ParameterStore::Entry& e) {
    return e.name.rfind("encoder.", 0) == 0 && !vit::is_lora_param(e.name) && e.name != "encoder.cls_token";
  });

  const auto pipe = sp::FittedPipeline::fit(task_pipeline(cfg.task.kind, cfg.model.image_size), grids_of(data.train));
  const auto train_proc = apply_all(pipe, data.train, opts.threads);
  const auto val_proc = apply_all(pipe, data.val, opts.threads);

  auto state = train::make_train_state(cfg.optim, train_proc.size());
  std::string last_ckpt;
  json report = {{"stage", "finetune"}, {"seed", cfg.seed}, {"task", vit::task_name(cfg.task.kind)},
                 {"freeze", freeze_json(cfg.freeze)}};
  std::string metric_name = "val_metric";
  bool higher = true;
  try {
    for (std::size_t e = 0; e < cfg.optim.epochs; ++e) {
      tc::RngState rng = tc::RngState(cfg.seed, 2).split(e);
      const auto m = train::finetune_epoch(train_proc, model, cfg.freeze, cfg.task.loss, state, rng);
      if (!std::isfinite(m.loss)) throw tc::NumericError("non-finite training loss at epoch " + std::to_string(e + 1));
      state.epoch = e + 1;
      const auto sc = score_task(model, val_proc, data.val, cfg, data.spec, false, opts.threads);
      if (!std::isfinite(sc.value)) throw tc::NumericError("non-finite validation metric at epoch " + std::to_string(e + 1));
      metric_name = sc.name;
      higher = sc.higher_is_better;
      dir.record({e + 1, m.loss, sc.value, m.lr, state.step}, sc.name);
      log("finetune: epoch " + std::to_string(e + 1) + " loss " + fmt("%.6g", m.loss) + " " + sc.name + " " +
          fmt("%.6g", sc.value));
      const bool last = e + 1 == cfg.optim.epochs;
      if (last || (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0)) {
        const auto path = dir.checkpoint(last ? "final" : epoch_name(e + 1));
        json extra = checkpoint_extra(cfg, pipe, e + 1);
        extra["metric_name"] = sc.name;
        extra["val_metric"] = sc.value;
        save_checkpoint(path, model, &state, extra);
        last_ckpt = path.string();
      }
    }
  } catch (const tc::NumericError& err) {
    report["status"] = "diverged";
    report["error"] = err.what();
    report["last_checkpoint"] = last_ckpt.empty() ? json(nullptr) : json(last_ckpt);
    report["epochs"] = dir.records_json(metric_name);
    write_json(dir.root() / "report.json", report);
    return {kExitDiverged, std::string("numeric divergence: ") + err.what(), report};
  }

  auto final_score = score_task(model, val_proc, data.val, cfg, data.spec, true, opts.threads);
  write_score(dir.root(), final_score, cfg.dump_preds);
  const auto vals = dir.val_series();
  const auto sharing = train::sharing_report(model);
  report["status"] = "ok";
  report["metric_name"] = final_score.name;
  report["metric"] = final_score.value;
  report["higher_is_better"] = higher;
  report["final"] = final_score.detail;
  report["epochs"] = dir.records_json(metric_name);
  report["convergence_epoch"] = convergence_epoch(vals, higher) + 1;
  report["trainable_params"] = sharing.trainable;
  report["total_params"] = sharing.total;
  report["shared_fraction"] = sharing.shared_fraction();
  report["backbone_checksum_before"] = backbone_sum;
  report["backbone_checksum_after"] = model.params().checksum([](const tc::ParameterStore::Entry& e) {
    return e.name.rfind("encoder.", 0) == 0 && !vit::is_lora_param(e.name) && e.name != "encoder.cls_token";
  });
  report["checkpoint"] = last_ckpt;
  report["runtime_s"] = seconds_since(t0);
  dir.write_epochs_csv(metric_name);
  write_json(dir.root() / "report.json", report);
  return {kExitOk, "finetune finished", report};
}

RunResult run_finetune(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (cfg.runs <= 1) return run_finetune_once(cfg, opts);
  json runs = json::array();
  std::vector<double> values;
  std::string name;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    ExperimentConfig c = cfg;
    c.runs = 1;
    c.seed = cfg.seed + r;
    c.out_dir = (fs::path(cfg.out_dir) / ("run-" + std::to_string(r))).string();
    auto res = run_finetune_once(c, opts);
    if (res.exit_code != kExitOk) return res;
    name = res.report["metric_name"].get<std::string>();
    values.push_back(res.report["metric"].get<double>());
    runs.push_back({{"seed", c.seed},
                    {"out_dir", c.out_dir},
                    {"metric", values.back()},
                    {"convergence_epoch", res.report["convergence_epoch"]}});
  }
  double mean = 0.0, var = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size() - 1));
  json report = {{"stage", "finetune"}, {"status", "ok"}, {"metric_name", name}, {"runs", runs},
                 {"mean", mean},        {"std", sd}};
  write_json(fs::path(cfg.out_dir) / "report.json", report);
  return {kExitOk, "finetune finished (" + std::to_string(cfg.runs) + " runs)", report};
}

RunResult run_evaluate(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  const auto ckpt = load_checkpoint(cfg.init_checkpoint);
  if (!ckpt.head) throw ConfigError("evaluate needs a fine-tuned checkpoint with a task head");
  if (ckpt.head->kind != cfg.task.kind) {
    throw ConfigError("task.kind is " + std::string(vit::task_name(cfg.task.kind)) + " but the checkpoint head is " +
                      std::string(vit::task_name(ckpt.head->kind)));
  }
  if (!ckpt.extra.contains("pipeline")) throw ConfigError("checkpoint carries no fitted pipeline");
  const auto model = restore_model(ckpt, cfg.model);
  const auto pipe = sp::FittedPipeline::from_json(ckpt.extra.at("pipeline"));
  Data data = load_data(cfg, opts.threads);
  if (data.val.empty()) throw ConfigError("evaluation needs a validation split (data.val_fraction > 0)");
  const auto val_proc = apply_all(pipe, data.val, opts.threads);
  auto sc = score_task(model, val_proc, data.val, cfg, data.spec, true, opts.threads);
  write_score(cfg.out_dir, sc, cfg.dump_preds);
  json report = {{"stage", "evaluate"},      {"status", "ok"},     {"checkpoint", cfg.init_checkpoint},
                 {"metric_name", sc.name},   {"metric", sc.value}, {"final", sc.detail},
                 {"samples", data.val.size()}};
  if (ckpt.extra.contains("val_metric")) {
    const double logged = ckpt.extra.at("val_metric").get<double>();
    report["checkpoint_metric"] = logged;
    report["abs_difference"] = std::abs(logged - sc.value);
  }
  report["runtime_s"] = seconds_since(t0);
  write_json(fs::path(cfg.out_dir) / "report.json", report);
  return {kExitOk, "evaluate finished", report};
}

RunResult run_simulate(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  const auto archive = sim::generate_dataset(cfg.data.spec, cfg.data.seed, opts.threads);
  const auto path = fs::path(cfg.out_dir) / "archive";
  sp::write_archive(path, archive);
  json report = {{"stage", "simulate"},
                 {"status", "ok"},
                 {"kind", sim::dataset_kind_name(cfg.data.spec.kind)},
                 {"samples", archive.samples.size()},
                 {"archive", path.string()},
                 {"runtime_s", seconds_since(t0)}};
  write_json(fs::path(cfg.out_dir) / "report.json", report);
  return {kExitOk, "wrote " + path.string(), report};
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    model.validate();
    optim.validate();
    data.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(data.val_fraction >= 0.0 && data.val_fraction < 1.0)) throw ConfigError("data.val_fraction must lie in [0, 1)");
  if (runs == 0) throw ConfigError("runs must be positive");
  if (out_dir.empty()) throw ConfigError("out_dir is empty");
  if (!data.archive.empty() && !fs::exists(fs::path(data.archive) / "manifest.json")) {
    throw ConfigError("data.archive does not exist or has no manifest: " + data.archive);
  }
  if (!init_checkpoint.empty() && !fs::exists(fs::path(init_checkpoint) / "manifest.json")) {
    throw ConfigError("init_checkpoint does not exist: " + init_checkpoint);
  }
  if (stage == Stage::kEvaluate && init_checkpoint.empty()) throw ConfigError("evaluate needs init_checkpoint");
  if (freeze.mode == train::FreezeMode::kLastNBlocks && freeze.last_n > model.encoder.blocks) {
    throw ConfigError("freeze.last_n exceeds the encoder depth");
  }
  if (freeze.mode == train::FreezeMode::kLora && freeze.lora.rank == 0) throw ConfigError("freeze.lora.rank must be positive");
  if (augment.enabled && !(augment.min_area > 0.0 && augment.min_area <= augment.max_area && augment.max_area <= 1.0)) {
    throw ConfigError("augment: crop areas must satisfy 0 < min_area <= max_area <= 1");
  }
  if (!(eval.snr_step_db > 0.0) || eval.snr_hi_db < eval.snr_lo_db) throw ConfigError("eval: bad SNR binning");
  if (eval.histogram_bins == 0) throw ConfigError("eval.histogram_bins must be positive");
  if (task.kind == vit::TaskKind::kChanEst && eval.covariance_draws < 2) {
    throw ConfigError("eval.covariance_draws must be at least 2");
  }
  if (data.archive.empty() && stage != Stage::kSimulate && stage != Stage::kPretrain) {
    using sim::DatasetKind;
    const auto k = data.spec.kind;
    const bool ok = (task.kind == vit::TaskKind::kChanEst) == (k == DatasetKind::kChanEst) &&
                    (task.kind == vit::TaskKind::kPositioning) == (k == DatasetKind::kPositioning);
    if (!ok) {
      throw ConfigError("task." + std::string(vit::task_name(task.kind)) + " does not match dataset kind " +
                        std::string(sim::dataset_kind_name(k)));
    }
  }
}

json to_json(const ExperimentConfig& c) {
  return {{"stage", stage_name(c.stage)},
          {"seed", c.seed},
          {"runs", c.runs},
          {"out_dir", c.out_dir},
          {"init_checkpoint", c.init_checkpoint},
          {"checkpoint_every", c.checkpoint_every},
          {"dump_preds", c.dump_preds},
          {"data",
           {{"archive", c.data.archive},
            {"seed", c.data.seed},
            {"val_fraction", c.data.val_fraction},
            {"spec", sim::to_json(c.data.spec)}}},
          {"model", vit::to_json(c.model)},
          {"optim", train::to_json(c.optim)},
          {"freeze", freeze_json(c.freeze)},
          {"task", task_json(c.task)},
          {"augment", augment_json(c.augment)},
          {"eval", eval_json(c.eval)}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.stage = parse_stage(j.value("stage", std::string("pretrain")));
    c.optim = c.stage == Stage::kPretrain ? train::pretrain_defaults() : train::finetune_defaults();
    c.seed = j.value("seed", c.seed);
    c.runs = j.value("runs", c.runs);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.init_checkpoint = j.value("init_checkpoint", c.init_checkpoint);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.dump_preds = j.value("dump_preds", c.dump_preds);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.archive = d.value("archive", c.data.archive);
      c.data.seed = d.value("seed", c.data.seed);
      c.data.val_fraction = d.value("val_fraction", c.data.val_fraction);
      if (d.contains("spec")) c.data.spec = sim::dataset_spec_from_json(d.at("spec"));
    }
    if (j.contains("model")) c.model = vit::model_config_from_json(j.at("model"));
    if (j.contains("optim")) c.optim = train::optim_config_from_json(j.at("optim"), c.optim);
    if (j.contains("freeze")) {
      const auto& f = j.at("freeze");
      c.freeze.mode = train::parse_freeze_mode(f.value("mode", std::string(train::freeze_mode_name(c.freeze.mode))));
      c.freeze.last_n = f.value("last_n", c.freeze.last_n);
      if (f.contains("lora")) c.freeze.lora = vit::lora_config_from_json(f.at("lora"));
    }
    if (j.contains("task")) c.task = task_from_json(j.at("task"));
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  reject_unknown_keys(j, to_json(c), "");
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  try {
    cfg.validate();
    switch (cfg.stage) {
      case Stage::kPretrain: return run_pretrain(cfg, opts);
      case Stage::kFinetune: return run_finetune(cfg, opts);
      case Stage::kEvaluate: return run_evaluate(cfg, opts);
      case Stage::kSimulate: return run_simulate(cfg, opts);
    }
    return {kExitFailure, "unknown stage", {}};
  } catch (const ConfigError& e) {
    return {kExitConfig, std::string("config error: ") + e.what(), {}};
  } catch (const CheckpointError& e) {
    return {kExitConfig, std::string("checkpoint error: ") + e.what(), {}};
  } catch (const tc::ShapeError& e) {
    return {kExitConfig, std::string("shape error: ") + e.what(), {}};
  } catch (const tc::NumericError& e) {
    return {kExitDiverged, std::string("numeric divergence: ") + e.what(), {}};
  } catch (const std::exception& e) {
    return {kExitFailure, std::string("error: ") + e.what(), {}};
  }
}

}  // namespace wavesfm::eval
