#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::tc {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[n x d] + row[d], broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor square(const Tensor& a);
// log(max(a, floor)); gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& a, double floor);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean of rows [first_row, n) of a [n x d], giving [d].
Tensor mean_rows(const Tensor& a, std::size_t first_row = 0);

// Neural network primitives
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps = 1e-6);
// Exact erf form: x * Phi(x).
Tensor gelu(const Tensor& x);

// Layout
Tensor reshape(const Tensor& a, Shape shape);
// out.flat[i] = a.flat[index[i]]; backward scatter-adds.
Tensor gather(const Tensor& a, std::span<const std::size_t> index, Shape out_shape);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

}  // namespace wavesfm::tc
