#include "wavesfm/signalpipe/pipeline.hpp"

#include <stdexcept>
#include <string>

namespace wavesfm::sp {

std::string_view step_name(Step s) {
  switch (s) {
    case Step::kLogScale: return "log_scale";
    case Step::kMinMaxUnit: return "minmax_unit";
    case Step::kMinMaxSymmetric: return "minmax_symmetric";
    case Step::kResize: return "resize";
    case Step::kStandardize: return "standardize";
  }
  return "unknown";
}

Step parse_step(std::string_view name) {
  for (Step s : {Step::kLogScale, Step::kMinMaxUnit, Step::kMinMaxSymmetric, Step::kResize, Step::kStandardize}) {
    if (step_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown pipeline step: " + std::string(name));
}

PipelineSpec pretrain_pipeline(Modality modality, std::size_t image_size) {
  PipelineSpec spec{{}, image_size};
  if (modality == Modality::kSpectrogram) spec.steps.push_back(Step::kLogScale);
  spec.steps.insert(spec.steps.end(), {Step::kMinMaxUnit, Step::kResize, Step::kStandardize});
  return spec;
}

PipelineSpec finetune_pipeline(std::size_t image_size) {
  return {{Step::kResize, Step::kMinMaxUnit, Step::kStandardize}, image_size};
}

PipelineSpec chanest_pipeline(std::size_t image_size) {
  return {{Step::kMinMaxSymmetric, Step::kStandardize, Step::kResize}, image_size};
}

FittedPipeline FittedPipeline::fit(const PipelineSpec& spec, const std::vector<tc::Tensor>& train_grids) {
  FittedPipeline p;
  p.spec_ = spec;
  p.stats_.resize(spec.steps.size());
  std::vector<tc::Tensor> current = train_grids;
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    switch (spec.steps[i]) {
      case Step::kMinMaxUnit:
      case Step::kMinMaxSymmetric: p.stats_[i] = compute_minmax(current); break;
      case Step::kStandardize: p.stats_[i] = compute_channel_stats(current); break;
      default: break;
    }
    if (i + 1 < spec.steps.size()) {
      for (auto& g : current) g = p.apply_step(i, g);
    }
  }
  return p;
}

tc::Tensor FittedPipeline::apply_step(std::size_t i, const tc::Tensor& grid) const {
  switch (spec_.steps[i]) {
    case Step::kLogScale: return log_scale(grid);
    case Step::kMinMaxUnit: return minmax_normalize(grid, stats_[i], 0.0, 1.0);
    case Step::kMinMaxSymmetric: return minmax_normalize(grid, stats_[i], -1.0, 1.0);
    case Step::kResize: return bicubic_resize(grid, spec_.image_size, spec_.image_size);
    case Step::kStandardize: return standardize(grid, stats_[i]);
  }
  throw std::logic_error("unhandled pipeline step");
}

tc::Tensor FittedPipeline::apply(const tc::Tensor& grid) const {
  tc::Tensor out = grid;
  for (std::size_t i = 0; i < spec_.steps.size(); ++i) out = apply_step(i, out);
  return out;
}

GridSample FittedPipeline::apply(const GridSample& sample) const {
  GridSample out = sample;
  out.data = apply(sample.data);
  return out;
}

nlohmann::json FittedPipeline::to_json() const {
  nlohmann::json j;
  j["image_size"] = spec_.image_size;
  j["steps"] = nlohmann::json::array();
  for (std::size_t i = 0; i < spec_.steps.size(); ++i) {
    nlohmann::json s;
    s["step"] = step_name(spec_.steps[i]);
    const auto& st = stats_[i];
    switch (spec_.steps[i]) {
      case Step::kMinMaxUnit:
      case Step::kMinMaxSymmetric:
        s["min"] = st.min;
        s["max"] = st.max;
        break;
      case Step::kStandardize:
        s["mean"] = st.mean;
        s["std"] = st.std;
        break;
      default: break;
    }
    j["steps"].push_back(s);
  }
  return j;
}

FittedPipeline FittedPipeline::from_json(const nlohmann::json& j) {
  FittedPipeline p;
  p.spec_.image_size = j.at("image_size").get<std::size_t>();
  for (const auto& s : j.at("steps")) {
    p.spec_.steps.push_back(parse_step(s.at("step").get<std::string>()));
    DatasetStats st;
    if (s.contains("min")) {
      st.min = s.at("min").get<double>();
      st.max = s.at("max").get<double>();
    }
    if (s.contains("mean")) {
      st.mean = s.at("mean").get<std::vector<double>>();
      st.std = s.at("std").get<std::vector<double>>();
    }
    p.stats_.push_back(std::move(st));
  }
  return p;
}

}  // namespace wavesfm::sp
