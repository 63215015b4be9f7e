#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wavesfm/signalpipe/grid_sample.hpp"
#include "wavesfm/signalpipe/preprocess.hpp"

namespace wavesfm::sp {

enum class Step {
  kLogScale,         // log10 with floor; spectrograms only
  kMinMaxUnit,       // dataset min/max onto [0, 1]
  kMinMaxSymmetric,  // dataset min/max onto [-1, 1]
  kResize,           // bicubic to image_size x image_size
  kStandardize,      // per-channel dataset mean/std
};

std::string_view step_name(Step s);
Step parse_step(std::string_view name);

struct PipelineSpec {
  std::vector<Step> steps;
  std::size_t image_size = 224;
};

// Pre-training order: log (spectrograms only), [0,1], resize, standardize.
PipelineSpec pretrain_pipeline(Modality modality, std::size_t image_size);
// Sensing, RF classification and positioning: resize, [0,1], standardize.
PipelineSpec finetune_pipeline(std::size_t image_size);
// Channel estimation: [-1,1], standardize, resize.
PipelineSpec chanest_pipeline(std::size_t image_size);

// A pipeline with its dataset-wide statistics. Statistics for each step are
// computed on the training split as it arrives at that step.
class FittedPipeline {
 public:
  FittedPipeline() = default;
  static FittedPipeline fit(const PipelineSpec& spec, const std::vector<tc::Tensor>& train_grids);

  tc::Tensor apply(const tc::Tensor& grid) const;
  GridSample apply(const GridSample& sample) const;

  const PipelineSpec& spec() const { return spec_; }
  const std::vector<DatasetStats>& stats() const { return stats_; }

  nlohmann::json to_json() const;
  static FittedPipeline from_json(const nlohmann::json& j);

 private:
  tc::Tensor apply_step(std::size_t i, const tc::Tensor& grid) const;

  PipelineSpec spec_;
  std::vector<DatasetStats> stats_;  // one slot per step, unused for stateless steps
};

}  // namespace wavesfm::sp
