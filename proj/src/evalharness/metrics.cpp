#include "wavesfm/evalharness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wavesfm::eval {

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ClassificationReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                            std::size_t classes) {
  if (preds.size() != labels.size()) throw std::invalid_argument("classification_metrics: misaligned inputs");
  if (classes == 0) throw std::invalid_argument("classification_metrics: zero classes");
  ClassificationReport r;
  r.classes = classes;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  const int c = static_cast<int>(classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c) throw std::invalid_argument("classification_metrics: label out of range");
    if (preds[i] < 0 || preds[i] >= c) throw std::invalid_argument("classification_metrics: prediction out of range");
    ++r.confusion[labels[i]][preds[i]];
    if (labels[i] == preds[i]) ++correct;
  }
  r.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());

  double sum = 0.0;
  std::size_t counted = 0;
  r.per_class_accuracy.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t row = 0;
    for (auto v : r.confusion[k]) row += v;
    if (row == 0) {
      r.excluded_classes.push_back(static_cast<int>(k));
      r.warnings.push_back("class " + std::to_string(k) + " has no samples; excluded from the mean");
      continue;
    }
    const double acc = static_cast<double>(r.confusion[k][k]) / static_cast<double>(row);
    r.per_class_accuracy[k] = acc;
    sum += acc;
    ++counted;
  }
  r.mean_per_class_accuracy = counted ? sum / static_cast<double>(counted) : 0.0;
  return r;
}

nlohmann::json ClassificationReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& a : per_class_accuracy) per.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  return {{"classes", classes},
          {"confusion", confusion},
          {"per_class_accuracy", per},
          {"mean_per_class_accuracy", mean_per_class_accuracy},
          {"accuracy", accuracy},
          {"excluded_classes", excluded_classes},
          {"warnings", warnings}};
}

std::string ClassificationReport::confusion_csv() const {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t k = 0; k < classes; ++k) os << ',' << k;
  os << '\n';
  for (std::size_t i = 0; i < classes; ++i) {
    os << i;
    for (auto v : confusion[i]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

Histogram make_histogram(const std::vector<double>& values, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram: zero bins");
  Histogram h;
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = hi * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::max(0.0, v) / hi * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

PositioningReport positioning_metrics(const std::vector<Vec3>& preds, const std::vector<Vec3>& targets,
                                      std::size_t bins) {
  if (preds.size() != targets.size()) throw std::invalid_argument("positioning_metrics: misaligned inputs");
  PositioningReport r;
  r.errors.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) s += (preds[i][d] - targets[i][d]) * (preds[i][d] - targets[i][d]);
    r.errors.push_back(std::sqrt(s));
  }
  if (!r.errors.empty()) {
    const double n = static_cast<double>(r.errors.size());
    double sum = 0.0;
    for (double e : r.errors) sum += e;
    r.mean = sum / n;
    double var = 0.0;
    for (double e : r.errors) var += (e - r.mean) * (e - r.mean);
    r.stddev = std::sqrt(var / n);
  }
  r.histogram = make_histogram(r.errors, bins);
  return r;
}

nlohmann::json PositioningReport::to_json() const {
  return {{"mean_error", mean},
          {"std_error", stddev},
          {"samples", errors.size()},
          {"histogram", {{"edges", histogram.edges}, {"counts", histogram.counts}}}};
}

std::string PositioningReport::histogram_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "lo,hi,count\n";
  for (std::size_t i = 0; i < histogram.counts.size(); ++i) {
    os << histogram.edges[i] << ',' << histogram.edges[i + 1] << ',' << histogram.counts[i] << '\n';
  }
  return os.str();
}

double per_sample_mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw std::invalid_argument("per_sample_mse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

std::optional<std::size_t> MseSnrTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

MseSnrTable mse_vs_snr(const std::vector<MseColumn>& columns, const std::vector<double>& snr_db,
                       const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("mse_vs_snr: need at least one bin");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("mse_vs_snr: edges must increase");
  }
  for (const auto& c : columns) {
    if (c.errors.size() != snr_db.size()) throw std::invalid_argument("mse_vs_snr: column '" + c.name + "' misaligned");
  }
  MseSnrTable t;
  for (const auto& c : columns) t.columns.push_back(c.name);
  const std::size_t bins = edges.size() - 1;
  std::vector<std::size_t> counts(bins, 0);
  std::vector<std::vector<double>> sums(bins, std::vector<double>(columns.size(), 0.0));
  for (std::size_t i = 0; i < snr_db.size(); ++i) {
    const double s = snr_db[i];
    if (s < edges.front() || s > edges.back()) continue;
    auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), s) - edges.begin());
    b = std::min(b == 0 ? 0 : b - 1, bins - 1);
    ++counts[b];
    for (std::size_t c = 0; c < columns.size(); ++c) sums[b][c] += columns[c].errors[i];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (counts[b] == 0) continue;
    MseSnrRow row{edges[b], edges[b + 1], counts[b], {}};
    for (double s : sums[b]) row.mse.push_back(s / static_cast<double>(counts[b]));
    t.rows.push_back(std::move(row));
  }
  const auto ls = t.column("ls"), model = t.column("model");
  if (ls && model) {
    for (const auto& row : t.rows) {
      if (row.mse[*ls] < row.mse[*model]) {
        t.crossover_db = row.snr_lo;
        break;
      }
    }
  }
  return t;
}

nlohmann::json MseSnrTable::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"snr_lo", r.snr_lo}, {"snr_hi", r.snr_hi}, {"count", r.count}};
    for (std::size_t c = 0; c < columns.size(); ++c) row[columns[c]] = r.mse[c];
    rows_j.push_back(row);
  }
  return {{"columns", columns},
          {"rows", rows_j},
          {"crossover_db", crossover_db ? nlohmann::json(*crossover_db) : nlohmann::json(nullptr)}};
}

std::string MseSnrTable::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "snr_lo,snr_hi,count";
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  for (const auto& r : rows) {
    os << r.snr_lo << ',' << r.snr_hi << ',' << r.count;
    for (double v : r.mse) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

std::vector<double> snr_bin_edges(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("snr_bin_edges: bad range");
  std::vector<double> e;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i <= n; ++i) e.push_back(lo - 0.5 * step + step * static_cast<double>(i));
  return e;
}

std::size_t convergence_epoch(const std::vector<double>& values, bool higher_is_better) {
  if (values.empty()) throw std::invalid_argument("convergence_epoch: no values");
  const double best = higher_is_better ? *std::max_element(values.begin(), values.end())
                                       : *std::min_element(values.begin(), values.end());
  const double tol = 0.01 * std::abs(best);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (higher_is_better ? values[i] >= best - tol : values[i] <= best + tol) return i;
  }
  return values.size() - 1;
}

}  // namespace wavesfm::eval
