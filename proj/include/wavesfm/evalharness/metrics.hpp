#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace wavesfm::eval {

std::size_t argmax(std::span<const double> v);

struct ClassificationReport {
  std::size_t classes = 0;
  // confusion[true][pred]; row sums equal the class counts.
  std::vector<std::vector<std::size_t>> confusion;
  // Empty for classes without samples.
  std::vector<std::optional<double>> per_class_accuracy;
  double mean_per_class_accuracy = 0.0;
  double accuracy = 0.0;
  std::vector<int> excluded_classes;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string confusion_csv() const;
};

// Classes with no samples are left out of the mean and reported in
// `excluded_classes`. Throws std::invalid_argument on labels or predictions
// outside 0..classes-1 or on misaligned inputs.
ClassificationReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                            std::size_t classes);

struct Histogram {
  std::vector<double> edges;   // bins + 1 ascending edges
  std::vector<std::size_t> counts;
};

// Equal-width bins over [0, max(values)]; the last bin is closed.
Histogram make_histogram(const std::vector<double>& values, std::size_t bins);

using Vec3 = std::array<double, 3>;

struct PositioningReport {
  std::vector<double> errors;   // Euclidean distance per sample
  double mean = 0.0;
  double stddev = 0.0;          // population standard deviation
  Histogram histogram;

  nlohmann::json to_json() const;
  std::string histogram_csv() const;
};

PositioningReport positioning_metrics(const std::vector<Vec3>& preds, const std::vector<Vec3>& targets,
                                      std::size_t bins = 20);

// Mean squared error per element between two equally sized vectors.
double per_sample_mse(std::span<const double> pred, std::span<const double> target);

struct MseColumn {
  std::string name;
  std::vector<double> errors;   // per-sample MSE, aligned with the SNR list
};

struct MseSnrRow {
  double snr_lo = 0.0;
  double snr_hi = 0.0;
  std::size_t count = 0;
  std::vector<double> mse;      // one value per column
  double center() const { return 0.5 * (snr_lo + snr_hi); }
};

struct MseSnrTable {
  std::vector<std::string> columns;
  std::vector<MseSnrRow> rows;
  // Lower edge of the first bin where the "ls" column is below "model".
  std::optional<double> crossover_db;

  std::optional<std::size_t> column(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Bins are [edges[i], edges[i+1]), the last one closed. Empty bins are
// omitted. The crossover is looked up when columns named "ls" and "model"
// are both present.
MseSnrTable mse_vs_snr(const std::vector<MseColumn>& columns, const std::vector<double>& snr_db,
                       const std::vector<double>& edges);
// Edges centred on each integer multiple of `step` within [lo, hi].
std::vector<double> snr_bin_edges(double lo, double hi, double step);

// First epoch (0-based index) whose value is within 1% of the best one.
// `higher_is_better` selects max or min as the best.
std::size_t convergence_epoch(const std::vector<double>& values, bool higher_is_better);

}  // namespace wavesfm::eval
