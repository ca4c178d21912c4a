#pragma once

// Batch experiment runner: per (model, density, seed) cell split -> train ->
// evaluate on clean and corrupted test sets; reports, aggregates, manifest
// and SVG figures under the configured output directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qosdiff/config.hpp"
#include "qosdiff/eval.hpp"

namespace qosdiff::experiment {

inline constexpr const char* kVersion = "qosdiff 0.1.0";

/// FNV-1a over the components, finished with a splitmix64 round.
std::uint64_t hash_seed(std::uint64_t base, double density);
std::uint64_t hash_seed(std::uint64_t base, double density, double noise);
std::uint64_t hash_seed(std::uint64_t base, double density, const std::string& model);

/// Split seed is shared by every model so all of them see the same partitions;
/// corruption seeds likewise. Only training randomness depends on the model.
std::uint64_t split_seed(std::uint64_t base, double density);
std::uint64_t corruption_seed(std::uint64_t base, double density, double noise);
std::uint64_t training_seed(std::uint64_t base, double density, const std::string& model);

struct RunOptions {
  bool force = false;
  std::size_t threads = 1;
  std::ostream* log = nullptr;
  std::string label_suffix;  // appended to model names in report rows (sweeps)
};

/// Cap from QOSDIFF_THREADS, 1 when unset.
std::size_t threads_from_env();

struct RunSummary {
  std::size_t cells = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<eval::MetricsReport> reports;  // both scales, cell order
  std::vector<std::string> errors;
  bool ok() const { return failed == 0; }
};

/// Fits one configured model on a split; used by run() and the acceptance harness.
std::unique_ptr<eval::Predictor> fit_model(const std::string& model, const config::ExperimentConfig& config,
                                           const data::QoSDataset& ds, const data::Split& split, std::uint64_t seed,
                                           const std::filesystem::path& loss_log = {});

/// Clean (p = 0) or corrupted test triplets for a split.
std::vector<data::Triplet> test_set(const data::Split& split, const data::QoSDataset& ds, double noise,
                                    std::uint64_t base_seed);

RunSummary run(const config::ExperimentConfig& config, const RunOptions& options = {});

struct SweepSummary {
  std::string axis;
  std::vector<double> values;
  std::vector<eval::MetricsReport> reports;  // raw scale
  bool ok = true;
};

/// axis: lambda | dimension | heads. Only valid when every configured model is qosdiff.
SweepSummary sweep(const config::ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                   const RunOptions& options = {});

/// Model x density grids ("mean±std") over every reports.csv below `dir`.
std::string report(const std::filesystem::path& dir);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
void write_line_plot_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series);

}  // namespace qosdiff::experiment
