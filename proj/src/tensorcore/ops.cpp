#include "wavesfm/tensorcore/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wavesfm::tc {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Wraps freshly computed values into a node; records parents and the
// backward closure only when some input needs a gradient.
Tensor record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
              std::function<void(Node&)> backward_fn) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  Tensor out = Tensor::from(std::move(shape), std::move(values), needs);
  if (needs) {
    auto& node = *out.node();
    node.parents.reserve(inputs.size());
    for (const auto& t : inputs) node.parents.push_back(t.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

// Gradient buffer of parent i when it participates, else nullptr.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const std::vector<double>& parent_data(Node& self, std::size_t i) { return self.parents[i]->data; }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return record({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMatMap g(self.grad.data(), m, n);
    if (double* ga = parent_grad(self, 0)) {
      MatMap(ga, m, k).noalias() += g * ConstMatMap(parent_data(self, 1).data(), k, n).transpose();
    }
    if (double* gb = parent_grad(self, 1)) {
      MatMap(gb, k, n).noalias() += ConstMatMap(parent_data(self, 0).data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MatMap(out.data(), n, m) = ConstMatMap(a.data().data(), m, n).transpose();
  return record({n, m}, std::move(out), {a}, [m, n](Node& self) {
    if (double* ga = parent_grad(self, 0)) {
      MatMap(ga, m, n) += ConstMatMap(self.grad.data(), n, m).transpose();
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return record(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return record(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (row.numel() != d) {
    throw ShapeError("add_row: row of " + std::to_string(row.numel()) + " elements vs width " + std::to_string(d));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto r = row.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += r[j];
  }
  return record(a.shape(), std::move(out), {a, row}, [n, d](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n * d; ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
      }
    }
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= v;
  return record(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += 2.0 * x[i] * self.grad[i];
    }
  });
}

Tensor log_clamped(const Tensor& a, double floor) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x[i], floor));
  return record(a.shape(), std::move(out), {a}, [floor](Node& self) {
    const auto& x = parent_data(self, 0);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (x[i] > floor) g[i] += self.grad[i] / x[i];
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return record({1}, {total}, {a}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      const double s = self.grad[0];
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += s;
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_rows(const Tensor& a, std::size_t first_row) {
  require_matrix(a, "mean_rows");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (first_row >= n) throw ShapeError("mean_rows: no rows left after skipping " + std::to_string(first_row));
  const double inv = 1.0 / static_cast<double>(n - first_row);
  std::vector<double> out(d, 0.0);
  auto x = a.data();
  for (std::size_t i = first_row; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
  }
  for (auto& v : out) v *= inv;
  return record({d}, std::move(out), {a}, [n, d, first_row, inv](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = first_row; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += inv * self.grad[j];
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  require_finite(x.data(), "softmax_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * d);
  auto in = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data() + i * d;
    double* o = out.data() + i * d;
    const double mx = *std::max_element(row, row + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(row[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return record(x.shape(), std::move(out), {x}, [n, d](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      const auto& y = self.data;
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * y[i * d + j];
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += y[i * d + j] * (self.grad[i * d + j] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& scale_t, const Tensor& shift, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (scale_t.numel() != d || shift.numel() != d) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(d) + " elements");
  }
  // Normalized values and per-row inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n * d);
  auto in = x.data();
  auto s = scale_t.data();
  auto b = shift.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * r;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * s[j] + b[j];
    }
  }
  return record(x.shape(), std::move(out), {x, scale_t, shift}, [n, d, xhat, inv_std](Node& self) {
    const auto& s = parent_data(self, 1);
    double* gx = parent_grad(self, 0);
    double* gs = parent_grad(self, 1);
    double* gb = parent_grad(self, 2);
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* go = self.grad.data() + i * d;
      const double* h = xhat->data() + i * d;
      double mean_dxhat = 0.0, mean_dxhat_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (gs) gs[j] += go[j] * h[j];
        if (gb) gb[j] += go[j];
        dxhat[j] = go[j] * s[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_h += dxhat[j] * h[j];
      }
      if (!gx) continue;
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_h /= static_cast<double>(d);
      const double r = (*inv_std)[i];
      for (std::size_t j = 0; j < d; ++j) {
        gx[i * d + j] += r * (dxhat[j] - mean_dxhat - h[j] * mean_dxhat_h);
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = in[i] * 0.5 * (1.0 + std::erf(in[i] * kInvSqrt2));
  }
  return record(x.shape(), std::move(out), {x}, [inv_sqrt_2pi](Node& self) {
    const auto& in = parent_data(self, 0);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double v = in[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return record(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> index, Shape out_shape) {
  if (shape_numel(out_shape) != index.size()) {
    throw ShapeError("gather: index count does not match output shape " + shape_str(out_shape));
  }
  const std::size_t n = a.numel();
  std::vector<double> out(index.size());
  auto in = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw ShapeError("gather: index out of range");
    out[i] = in[index[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return record(std::move(out_shape), std::move(out), {a}, [idx](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx->size(); ++i) g[(*idx)[i]] += self.grad[i];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_matrix(a, "gather_rows");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (rows.empty()) throw ShapeError("gather_rows: empty row selection");
  std::vector<double> out(rows.size() * d);
  auto in = a.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(in.data() + rows[i] * d, d, out.data() + i * d);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return record({rows.size(), d}, std::move(out), {a}, [idx, d](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx->size(); ++i) {
        double* dst = g + (*idx)[i] * d;
        const double* src = self.grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (count == 0 || first + count > d) throw ShapeError("slice_cols: range outside " + shape_str(a.shape()));
  std::vector<double> out(n * count);
  auto in = a.data();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(in.data() + i * d + first, count, out.data() + i * count);
  return record({n, count}, std::move(out), {a}, [n, d, first, count](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < count; ++j) g[i * d + first + j] += self.grad[i * count + j];
      }
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t n = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != n) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(in.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return record({n, total}, std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + offset + j];
        }
      }
      offset += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().rank() == 2 ? parts.front().dim(1) : parts.front().numel();
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  for (const auto& p : parts) {
    // Vectors are treated as single rows.
    const std::size_t width = p.rank() == 2 ? p.dim(1) : p.numel();
    if (width != d) throw ShapeError("concat_rows: widths differ");
    sizes.push_back(p.numel());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t rows = out.size() / d;
  return record({rows, d}, std::move(out), parts, [sizes](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (double* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[offset + i];
      }
      offset += sizes[k];
    }
  });
}

}  // namespace wavesfm::tc
