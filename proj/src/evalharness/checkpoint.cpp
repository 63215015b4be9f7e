#include "wavesfm/evalharness/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <system_error>

#include "wavesfm/signalpipe/archive.hpp"

namespace wavesfm::eval {

namespace fs = std::filesystem;

namespace {
constexpr const char* kFormat = "wavesfm-checkpoint";
constexpr int kVersion = 1;

std::string file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.wfm", i);
  return buf;
}

tc::Tensor read_checked(const fs::path& path, const nlohmann::json& entry) {
  tc::Tensor t;
  try {
    t = sp::read_tensor_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
  }
  const auto shape = entry.at("shape").get<tc::Shape>();
  if (t.shape() != shape) {
    throw CheckpointError("checkpoint corrupt: " + path.string() + " holds " + tc::shape_str(t.shape()) +
                          ", manifest says " + tc::shape_str(shape));
  }
  if (tc::tensor_checksum(t) != entry.at("checksum").get<std::uint64_t>()) {
    throw CheckpointError("checkpoint corrupt: checksum mismatch in " + path.string());
  }
  return t;
}

nlohmann::json write_entry(const fs::path& dir, const std::string& sub, std::size_t i, const std::string& name,
                           const tc::Tensor& t) {
  const std::string rel = sub + "/" + file_name(i);
  sp::write_tensor_file(dir / rel, t, sp::DType::kFloat64);
  return {{"name", name}, {"file", rel}, {"shape", t.shape()}, {"checksum", tc::tensor_checksum(t)}};
}
}  // namespace

nlohmann::json to_json(const vit::TaskHeadSpec& h) {
  return {{"kind", vit::task_name(h.kind)},
          {"outputs", h.outputs},
          {"target_height", h.target_height},
          {"target_width", h.target_width},
          {"target_channels", h.target_channels}};
}

vit::TaskHeadSpec head_spec_from_json(const nlohmann::json& j) {
  vit::TaskHeadSpec h;
  h.kind = vit::parse_task(j.at("kind").get<std::string>());
  h.outputs = j.at("outputs").get<std::size_t>();
  h.target_height = j.at("target_height").get<std::size_t>();
  h.target_width = j.at("target_width").get<std::size_t>();
  h.target_channels = j.at("target_channels").get<std::size_t>();
  return h;
}

void save_checkpoint(const fs::path& dir, const vit::WavesModel& model, const train::TrainState* state,
                     const nlohmann::json& extra) {
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  fs::create_directories(tmp / "moments");

  nlohmann::json manifest = {{"format", kFormat}, {"version", kVersion}, {"model", vit::to_json(model.config())}};
  manifest["head"] = model.head() ? to_json(*model.head()) : nlohmann::json(nullptr);
  manifest["lora"] = model.lora() ? vit::to_json(*model.lora()) : nlohmann::json(nullptr);

  nlohmann::json params = nlohmann::json::array();
  std::size_t i = 0;
  for (const auto& e : model.params()) {
    auto entry = write_entry(tmp, "params", i++, e.name, e.tensor);
    entry["requires_grad"] = e.tensor.requires_grad();
    params.push_back(std::move(entry));
  }
  manifest["params"] = std::move(params);

  nlohmann::json moments = nlohmann::json::array();
  if (state) {
    manifest["step"] = state->step;
    manifest["epoch"] = state->epoch;
    manifest["adam_steps"] = state->adam.steps();
    std::size_t k = 0;
    // Store order follows the parameter store so the files are reproducible.
    for (const auto& e : model.params()) {
      auto it = state->adam.moments().find(e.name);
      if (it == state->adam.moments().end()) continue;
      const auto n = it->second.m.size();
      nlohmann::json m = write_entry(tmp, "moments", k++, e.name + "#m", tc::Tensor::from({n}, it->second.m));
      nlohmann::json v = write_entry(tmp, "moments", k++, e.name + "#v", tc::Tensor::from({n}, it->second.v));
      moments.push_back({{"name", e.name}, {"m", m}, {"v", v}});
    }
  } else {
    manifest["step"] = 0;
    manifest["epoch"] = 0;
    manifest["adam_steps"] = 0;
  }
  manifest["moments"] = std::move(moments);
  manifest["extra"] = extra;

  {
    std::ofstream os(tmp / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write checkpoint manifest in " + tmp.string());
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw CheckpointError("checkpoint missing: no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint corrupt: unreadable manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat) throw CheckpointError("not a checkpoint: " + dir.string());
  if (manifest.value("version", 0) != kVersion) throw CheckpointError("unsupported checkpoint version in " + dir.string());

  Checkpoint c;
  try {
    c.model = vit::model_config_from_json(manifest.at("model"));
    if (!manifest.at("head").is_null()) c.head = head_spec_from_json(manifest["head"]);
    if (!manifest.at("lora").is_null()) c.lora = vit::lora_config_from_json(manifest["lora"]);
    for (const auto& e : manifest.at("params")) {
      tc::Tensor t = read_checked(dir / e.at("file").get<std::string>(), e);
      t.set_requires_grad(e.value("requires_grad", false));
      c.params.add(e.at("name").get<std::string>(), t);
    }
    c.step = manifest.at("step").get<std::size_t>();
    c.epoch = manifest.at("epoch").get<std::size_t>();
    c.adam_steps = manifest.at("adam_steps").get<std::size_t>();
    for (const auto& e : manifest.at("moments")) {
      const tc::Tensor m = read_checked(dir / e.at("m").at("file").get<std::string>(), e.at("m"));
      const tc::Tensor v = read_checked(dir / e.at("v").at("file").get<std::string>(), e.at("v"));
      train::Adam::Moments mom;
      mom.m.assign(m.data().begin(), m.data().end());
      mom.v.assign(v.data().begin(), v.data().end());
      c.moments.emplace(e.at("name").get<std::string>(), std::move(mom));
    }
    c.extra = manifest.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint corrupt: malformed manifest in " + dir.string() + ": " + e.what());
  }
  return c;
}

vit::WavesModel restore_model(const Checkpoint& ckpt, const vit::ModelConfig& expected) {
  expected.validate();
  tc::RngState rng(0);
  vit::WavesModel model(expected, rng, ckpt.params.contains("decoder.embed"));
  if (ckpt.head) model.attach_head(*ckpt.head, rng);
  if (ckpt.lora) model.attach_lora(*ckpt.lora, rng);
  // Token-pooled heads add the class token; a stored one without a head is kept too.
  if (!model.params().contains("encoder.cls_token") && ckpt.params.contains("encoder.cls_token")) {
    model.params().add("encoder.cls_token", tc::Tensor::zeros({expected.encoder.dim}));
  }

  for (auto& e : model.params()) {
    if (!ckpt.params.contains(e.name)) throw tc::ShapeError("checkpoint lacks tensor '" + e.name + "'");
    const tc::Tensor& stored = ckpt.params.get(e.name);
    if (stored.shape() != e.tensor.shape()) {
      throw tc::ShapeError("checkpoint tensor '" + e.name + "' has shape " + tc::shape_str(stored.shape()) +
                           " but the model expects " + tc::shape_str(e.tensor.shape()));
    }
    auto dst = e.tensor.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
    e.tensor.set_requires_grad(stored.requires_grad());
  }
  for (const auto& e : ckpt.params) {
    if (!model.params().contains(e.name)) throw tc::ShapeError("checkpoint tensor '" + e.name + "' is not part of the model");
  }
  return model;
}

void restore_train_state(const Checkpoint& ckpt, train::TrainState& state) {
  state.step = ckpt.step;
  state.epoch = ckpt.epoch;
  state.adam.restore(ckpt.adam_steps, ckpt.moments);
}

}  // namespace wavesfm::eval
