#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qosdiff/config.hpp"
#include "qosdiff/experiment.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::size_t begin = 0;
  while (begin <= csv.size()) {
    const auto end = csv.find(',', begin);
    const auto item = csv.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw qosdiff::data::ConfigError("--values: cannot parse '" + item + "'");
    }
    out.push_back(v);
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QoS prediction experiments: QoSDiff and classical baselines"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  auto* run = app.add_subcommand("run", "train and evaluate every configured cell");
  run->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  run->add_flag("--force", force, "recompute cells that already completed");

  std::string axis;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "hyperparameter sensitivity sweep (qosdiff only)");
  sweep->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "lambda | dimension | heads")->required();
  sweep->add_option("--values", values, "comma-separated axis values")->required();
  sweep->add_flag("--force", force, "recompute cells that already completed");

  std::string dir;
  auto* report = app.add_subcommand("report", "print model x density tables from finished runs");
  report->add_option("--dir", dir, "directory holding run outputs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      std::cout << qosdiff::experiment::report(dir);
      return EXIT_SUCCESS;
    }
    const auto config = qosdiff::config::load_config(config_path);
    qosdiff::experiment::RunOptions options;
    options.force = force;
    options.threads = qosdiff::experiment::threads_from_env();
    options.log = &std::cerr;
    if (run->parsed()) {
      const auto summary = qosdiff::experiment::run(config, options);
      std::cerr << summary.cells << " cells: " << summary.executed << " run, " << summary.skipped << " reused, "
                << summary.failed << " failed\n";
      for (const auto& e : summary.errors) std::cerr << "  " << e << '\n';
      std::cout << qosdiff::experiment::report(config.output);
      return summary.ok() ? EXIT_SUCCESS : EXIT_FAILURE;
    }
    const auto summary = qosdiff::experiment::sweep(config, axis, parse_values(values), options);
    std::cerr << "sweep " << summary.axis << ": " << summary.reports.size() << " report rows\n";
    return summary.ok ? EXIT_SUCCESS : EXIT_FAILURE;
  } catch (const qosdiff::data::ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return EXIT_FAILURE;
  }
}
