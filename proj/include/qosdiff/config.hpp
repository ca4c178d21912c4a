#pragma once

// Experiment configuration: INI-style sections of key = value pairs.
//
//   [dataset]     format, paths, attribute fields (or synthetic generator knobs)
//   [experiment]  models, densities, seeds, noise levels, output directory
//   [qosdiff]     model widths, loss and optimizer settings
//   [baselines]   neighborhood and factor-model settings

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qosdiff/baselines.hpp"
#include "qosdiff/data.hpp"
#include "qosdiff/train.hpp"

namespace qosdiff::config {

struct DatasetSpec {
  std::string format = "wsdream";  // wsdream | csv | synthetic
  std::string name;
  std::filesystem::path matrix;
  std::filesystem::path user_list;
  std::filesystem::path service_list;
  std::filesystem::path csv;
  std::vector<std::string> user_fields{"Country", "AS"};
  std::vector<std::string> service_fields{"Country", "AS", "Provider"};
  data::SyntheticSpec synthetic;
};

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> models{"qosdiff", "upcc", "ipcc", "uipcc", "pmf", "biasmf"};
  return models;
}

struct BaselineSettings {
  baselines::NeighborConfig neighbor;
  double uipcc_weight = 0.5;
  baselines::FactorConfig factor;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::string> models{"qosdiff"};
  std::vector<double> densities{0.05};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> noise{0.0};
  std::filesystem::path output = "runs";
  train::ModelConfig model;
  train::LossConfig loss;
  BaselineSettings baselines;

  /// Throws data::ConfigError naming the first invalid field.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const ExperimentConfig& config);

bool equivalent(const ExperimentConfig& a, const ExperimentConfig& b);

/// Loads, normalizes and names the configured dataset.
data::QoSDataset load_dataset(const DatasetSpec& spec);

}  // namespace qosdiff::config
