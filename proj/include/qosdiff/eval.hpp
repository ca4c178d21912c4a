#pragma once

// Accuracy metrics, multi-seed aggregation and robustness degradation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qosdiff/data.hpp"

namespace qosdiff::eval {

enum class Scale { kNormalized, kRaw };

std::string to_string(Scale scale);
Scale parse_scale(const std::string& s);

/// Anything that maps (user, service) pairs to normalized QoS predictions.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<double> predict(std::span<const data::Triplet> pairs) = 0;
};

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);

struct MetricsReport {
  std::string dataset;
  std::string model;
  double density = 0.0;
  std::uint64_t seed = 0;
  double noise = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  Scale scale = Scale::kRaw;
};

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
};

/// Scores `predictor` on normalized triplets. Predictions are clamped to
/// [0, 1]; on the raw scale predictions and truths are multiplied by the
/// dataset's global maximum before the metrics are taken.
Metrics evaluate(Predictor& predictor, std::span<const data::Triplet> test, const data::QoSDataset& ds, Scale scale);

/// (mae_p - mae_0) / mae_0 * 100.
double degradation(double mae_p, double mae_0);

struct AggregateRow {
  std::string dataset;
  std::string model;
  double density = 0.0;
  double noise = 0.0;
  Scale scale = Scale::kRaw;
  std::size_t runs = 0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  std::optional<double> degradation;  // vs noise 0 of the same group
};

/// Mean and sample standard deviation per (dataset, model, density, noise, scale).
std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports);

double sample_std(std::span<const double> xs);

std::string format_number(double x);

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> read_reports_csv(const std::filesystem::path& path);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);

}  // namespace qosdiff::eval
