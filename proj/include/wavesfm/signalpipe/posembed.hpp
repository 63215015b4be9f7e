#pragma once

#include <cstddef>
#include <vector>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::sp {

// 1-D sine-cosine code of `position` in `dim` entries:
// [sin(p w_0) .. sin(p w_{dim/2-1}), cos(p w_0) .. cos(p w_{dim/2-1})],
// w_k = 10000^(-2k/dim).
std::vector<double> sincos_1d(double position, std::size_t dim);

// [rows*cols x dim]; the first dim/2 entries encode the row index and the
// last dim/2 the column index. Requires dim % 4 == 0.
tc::Tensor posembed_2d(std::size_t rows, std::size_t cols, std::size_t dim);

// posembed_2d with a leading all-zero row for the class token.
tc::Tensor posembed_2d_with_cls(std::size_t rows, std::size_t cols, std::size_t dim);

}  // namespace wavesfm::sp
