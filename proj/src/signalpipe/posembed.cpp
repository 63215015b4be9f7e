#include "wavesfm/signalpipe/posembed.hpp"

#include <cmath>
#include <string>

namespace wavesfm::sp {

std::vector<double> sincos_1d(double position, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw tc::ShapeError("sincos_1d: dimension must be even");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    out[k] = std::sin(position * omega);
    out[half + k] = std::cos(position * omega);
  }
  return out;
}

tc::Tensor posembed_2d(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) {
    throw tc::ShapeError("posembed_2d: dimension " + std::to_string(dim) + " is not divisible by 4");
  }
  const std::size_t half = dim / 2;
  std::vector<double> out(rows * cols * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row_code = sincos_1d(static_cast<double>(r), half);
    for (std::size_t c = 0; c < cols; ++c) {
      const auto col_code = sincos_1d(static_cast<double>(c), half);
      double* dst = out.data() + (r * cols + c) * dim;
      std::copy(row_code.begin(), row_code.end(), dst);
      std::copy(col_code.begin(), col_code.end(), dst + half);
    }
  }
  return tc::Tensor::from({rows * cols, dim}, std::move(out));
}

tc::Tensor posembed_2d_with_cls(std::size_t rows, std::size_t cols, std::size_t dim) {
  const auto grid = posembed_2d(rows, cols, dim);
  std::vector<double> out(dim, 0.0);
  out.insert(out.end(), grid.data().begin(), grid.data().end());
  return tc::Tensor::from({rows * cols + 1, dim}, std::move(out));
}

}  // namespace wavesfm::sp
