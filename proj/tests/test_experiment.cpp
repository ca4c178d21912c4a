#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qosdiff/config.hpp"
#include "qosdiff/experiment.hpp"

using namespace qosdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("qosdiff_exp_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

config::ExperimentConfig small(const fs::path& out, const std::string& models = "upcc") {
  auto c = config::parse_config(
      "[dataset]\nformat = synthetic\nsynthetic_users = 30\nsynthetic_services = 40\n"
      "[experiment]\nmodels = " + models + "\ndensities = 0.1\nseeds = 1,2,3\nnoise = 0\n");
  c.output = out;
  return c;
}

}  // namespace

TEST_CASE("seed derivation is deterministic and separates components") {
  CHECK(experiment::split_seed(1, 0.05) == experiment::split_seed(1, 0.05));
  CHECK(experiment::split_seed(1, 0.05) != experiment::split_seed(2, 0.05));
  CHECK(experiment::split_seed(1, 0.05) != experiment::split_seed(1, 0.1));
  CHECK(experiment::corruption_seed(1, 0.05, 5) != experiment::corruption_seed(1, 0.05, 10));
  CHECK(experiment::training_seed(1, 0.05, "pmf") != experiment::training_seed(1, 0.05, "biasmf"));
}

TEST_CASE("run: one row per seed, one aggregate row, idempotent rerun") {
  TempDir dir("run");
  const auto c = small(dir.path / "a");
  const auto s = experiment::run(c);
  CHECK(s.ok());
  CHECK(s.cells == 3);
  CHECK(s.executed == 3);
  const auto raw = eval::read_reports_csv(c.output / "reports.csv");
  CHECK(raw.size() == 3);
  for (const auto& r : raw) {
    CHECK(r.model == "upcc");
    CHECK(r.scale == eval::Scale::kRaw);
    CHECK(r.mae > 0.0);
  }
  const auto agg = slurp(c.output / "aggregate.csv");
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 2);  // header + one row
  CHECK(fs::exists(c.output / "figures" / "mae_vs_density.svg"));

  const auto manifest = nlohmann::json::parse(slurp(c.output / "manifest.json"));
  CHECK(manifest["version"] == experiment::kVersion);
  const auto back = config::parse_config(manifest["config"].get<std::string>());
  CHECK(config::equivalent(back, c));

  const auto before = slurp(c.output / "reports.csv");
  const auto again = experiment::run(c);
  CHECK(again.executed == 0);
  CHECK(again.skipped == 3);
  CHECK(slurp(c.output / "reports.csv") == before);

  experiment::RunOptions force;
  force.force = true;
  CHECK(experiment::run(c, force).executed == 3);
  CHECK(slurp(c.output / "reports.csv") == before);
}

TEST_CASE("byte-identical reports across output directories") {
  TempDir dir("bytes");
  const auto a = small(dir.path / "a", "upcc, pmf");
  const auto b = small(dir.path / "b", "upcc, pmf");
  REQUIRE(experiment::run(a).ok());
  REQUIRE(experiment::run(b).ok());
  for (const char* f : {"reports.csv", "reports_normalized.csv", "aggregate.csv"}) {
    CHECK(slurp(a.output / f) == slurp(b.output / f));
    CHECK(!slurp(a.output / f).empty());
  }
}

TEST_CASE("noise levels produce a degradation column") {
  TempDir dir("noise");
  auto c = small(dir.path / "n");
  c.noise = {0, 5, 10};
  const auto s = experiment::run(c);
  REQUIRE(s.ok());
  const auto agg = slurp(c.output / "aggregate.csv");
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 4);
  CHECK(fs::exists(c.output / "figures" / "mae_vs_noise.svg"));
}

TEST_CASE("sweep and report") {
  TempDir dir("sweep");
  const auto c = small(dir.path / "s");
  CHECK_THROWS_AS(experiment::sweep(c, "lambda", {0.1, 0.5}), data::ConfigError);
  auto q = c;
  q.models = {"qosdiff"};
  CHECK_THROWS_AS(experiment::sweep(q, "width", {1}), data::ConfigError);
  CHECK_THROWS_AS(experiment::sweep(q, "heads", {1.5}), data::ConfigError);

  CHECK(experiment::report(dir.path / "empty") == "no runs found in " + (dir.path / "empty").string() + "\n");
  REQUIRE(experiment::run(c).ok());
  const auto text = experiment::report(dir.path);
  CHECK(text.find("upcc") != std::string::npos);
}
