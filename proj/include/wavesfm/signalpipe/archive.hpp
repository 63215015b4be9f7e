#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "wavesfm/signalpipe/grid_sample.hpp"

namespace wavesfm::sp {

// WFM1 tensor file, all fields little-endian:
//   bytes 0..3   magic "WFM1"
//   u32          dtype code (1 = float32, 2 = float64)
//   u32          rank
//   u64 x rank   extents
//   payload      product(extents) elements of the given dtype
enum class DType : std::uint32_t { kFloat32 = 1, kFloat64 = 2 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor_file(const std::filesystem::path& path, const tc::Tensor& t, DType dtype = DType::kFloat32);
tc::Tensor read_tensor_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const tc::Tensor& t, DType dtype);
tc::Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

// Sample archive: one WFM1 file per sample (plus one per regression target)
// and manifest.json listing metadata and generator parameters.
struct Archive {
  std::vector<GridSample> samples;
  nlohmann::json generator;  // free-form description of how the data was made
};

void write_archive(const std::filesystem::path& dir, const Archive& archive);
Archive read_archive(const std::filesystem::path& dir);

}  // namespace wavesfm::sp
