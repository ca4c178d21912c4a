#include "qosdiff/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "qosdiff/baselines.hpp"
#include "qosdiff/train.hpp"

namespace qosdiff::experiment {

using json = nlohmann::json;
using data::ConfigError;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv_u64(std::uint64_t h, std::uint64_t x) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(x >> (8 * i));
  return fnv(h, bytes, 8);
}

std::uint64_t finish(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string cell_key(const std::string& model, double density, std::uint64_t seed) {
  return model + "_d" + fmt_g(density) + "_s" + std::to_string(seed);
}

void write_atomic(const std::filesystem::path& path, const std::string& body) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Cell {
  std::string model;
  double density = 0.0;
  std::uint64_t seed = 0;
  std::string key;
};

}  // namespace

std::uint64_t hash_seed(std::uint64_t base, double density) {
  return finish(fnv_u64(fnv_u64(kFnvOffset, base), std::bit_cast<std::uint64_t>(density)));
}

std::uint64_t hash_seed(std::uint64_t base, double density, double noise) {
  std::uint64_t h = fnv_u64(fnv_u64(kFnvOffset, base), std::bit_cast<std::uint64_t>(density));
  return finish(fnv_u64(h, std::bit_cast<std::uint64_t>(noise)));
}

std::uint64_t hash_seed(std::uint64_t base, double density, const std::string& model) {
  std::uint64_t h = fnv_u64(fnv_u64(kFnvOffset, base), std::bit_cast<std::uint64_t>(density));
  return finish(fnv(h, model.data(), model.size()));
}

std::uint64_t split_seed(std::uint64_t base, double density) { return hash_seed(base, density); }

std::uint64_t corruption_seed(std::uint64_t base, double density, double noise) {
  return hash_seed(base, density, noise);
}

std::uint64_t training_seed(std::uint64_t base, double density, const std::string& model) {
  return hash_seed(base, density, model);
}

std::size_t threads_from_env() {
  const char* v = std::getenv("QOSDIFF_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  const std::string s(v);
  if (s.find_first_not_of("0123456789") != std::string::npos || std::stoul(s) == 0) {
    throw ConfigError("QOSDIFF_THREADS must be a positive integer (got '" + s + "')");
  }
  return std::stoul(s);
}

std::unique_ptr<eval::Predictor> fit_model(const std::string& model, const config::ExperimentConfig& config,
                                           const data::QoSDataset& ds, const data::Split& split, std::uint64_t seed,
                                           const std::filesystem::path& loss_log) {
  const auto train = data::select(ds, split.train);
  if (model == "qosdiff") {
    auto m = std::make_unique<train::QoSDiffModel>(ds, config.model, seed);
    train::Trainer trainer(*m, ds, split, config.loss, seed);
    const auto state = trainer.fit();
    if (!loss_log.empty()) train::write_loss_log(loss_log, state.log);
    return m;
  }
  const auto& b = config.baselines;
  if (model == "upcc" || model == "ipcc") {
    return std::make_unique<baselines::NeighborModel>(model == "upcc" ? baselines::Side::kUser
                                                                      : baselines::Side::kService,
                                                      ds.users, ds.services, train, b.neighbor);
  }
  if (model == "uipcc") {
    return std::make_unique<baselines::UipccModel>(ds.users, ds.services, train, b.neighbor, b.uipcc_weight);
  }
  if (model == "pmf" || model == "biasmf") {
    auto m = std::make_unique<baselines::FactorModel>(
        model == "pmf" ? baselines::FactorVariant::kPmf : baselines::FactorVariant::kBiasMf, ds.users, ds.services,
        b.factor, seed);
    m->fit(train, data::select(ds, split.val));
    return m;
  }
  throw ConfigError("unknown model '" + model + "'");
}

std::vector<data::Triplet> test_set(const data::Split& split, const data::QoSDataset& ds, double noise,
                                    std::uint64_t base_seed) {
  if (noise == 0.0) return data::select(ds, split.test);
  return data::corrupt_test(split, ds, noise, corruption_seed(base_seed, split.density, noise)).triplets;
}

// ---------------------------------------------------------------------------

RunSummary run(const config::ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto out_dir = config.output;
  const auto cell_dir = out_dir / "cells";
  std::filesystem::create_directories(cell_dir);
  const auto manifest_path = out_dir / "manifest.json";
  const std::string snapshot = config::to_ini(config);

  json manifest;
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      manifest = json::parse(in);
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  const bool same_config = manifest.contains("config") && manifest["config"] == snapshot;
  if (!same_config || !manifest.contains("cells")) manifest["cells"] = json::object();
  manifest["version"] = kVersion;
  manifest["config"] = snapshot;

  std::vector<Cell> cells;
  for (const auto& model : config.models) {
    for (double d : config.densities) {
      for (auto seed : config.seeds) cells.push_back({model, d, seed, cell_key(model, d, seed)});
    }
  }

  RunSummary summary;
  summary.cells = cells.size();
  std::vector<std::vector<eval::MetricsReport>> results(cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const auto file = cell_dir / (cell.key + ".csv");
    const bool done = !options.force && manifest["cells"].contains(cell.key) &&
                      manifest["cells"][cell.key].value("status", "") == "ok" && std::filesystem::exists(file);
    if (done) {
      results[c] = eval::read_reports_csv(file);
      ++summary.skipped;
    } else {
      todo.push_back(c);
    }
  }

  std::mutex mutex;
  auto log = [&](const std::string& line) {
    if (options.log == nullptr) return;
    std::lock_guard lock(mutex);
    *options.log << line << '\n' << std::flush;
  };
  auto save_manifest = [&] { write_atomic(manifest_path, manifest.dump(2) + "\n"); };

  std::unique_ptr<data::QoSDataset> ds;
  if (!todo.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ds = std::make_unique<data::QoSDataset>(config::load_dataset(config.dataset));
    } catch (const std::exception& err) {
      manifest["load_error"] = err.what();
      save_manifest();
      throw;
    }
    manifest["load_seconds"] = seconds_since(t0);
    log("loaded " + ds->name + ": " + std::to_string(ds->users) + " users, " + std::to_string(ds->services) +
        " services, " + std::to_string(ds->triplets.size()) + " observations");
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < todo.size(); t = next++) {
      const std::size_t c = todo[t];
      const auto& cell = cells[c];
      json entry = {{"model", cell.model}, {"density", cell.density}, {"seed", cell.seed}};
      json stages = json::object();
      std::string status = "ok";
      log("cell " + cell.key + ": start");
      try {
        auto t0 = std::chrono::steady_clock::now();
        const auto split = data::make_split(*ds, cell.density, split_seed(cell.seed, cell.density));
        stages["split"] = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        const auto loss_log = cell.model == "qosdiff" ? cell_dir / (cell.key + "_loss.csv") : std::filesystem::path{};
        auto predictor = fit_model(cell.model, config, *ds, split,
                                   training_seed(cell.seed, cell.density, cell.model), loss_log);
        stages["train"] = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        std::vector<eval::MetricsReport> rows;
        for (double p : config.noise) {
          const auto test = test_set(split, *ds, p, cell.seed);
          for (auto scale : {eval::Scale::kRaw, eval::Scale::kNormalized}) {
            const auto m = eval::evaluate(*predictor, test, *ds, scale);
            rows.push_back({ds->name, cell.model + options.label_suffix, cell.density, cell.seed, p, m.mae, m.rmse,
                            scale});
          }
        }
        stages["evaluate"] = seconds_since(t0);
        // Re-read so fresh and resumed runs aggregate identical (rounded) values.
        const auto file = cell_dir / (cell.key + ".csv");
        eval::write_reports_csv(file, rows);
        rows = eval::read_reports_csv(file);
        entry["status"] = "ok";
        entry["stages"] = stages;
        std::lock_guard lock(mutex);
        results[c] = std::move(rows);
        manifest["cells"][cell.key] = entry;
        ++summary.executed;
        save_manifest();
      } catch (const std::exception& err) {
        status = "failed";
        entry["status"] = status;
        entry["error"] = err.what();
        entry["stages"] = stages;
        std::lock_guard lock(mutex);
        manifest["cells"][cell.key] = entry;
        ++summary.failed;
        summary.errors.push_back(cell.key + ": " + err.what());
        save_manifest();
      }
      log("cell " + cell.key + ": " + status);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, todo.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  save_manifest();

  std::vector<eval::MetricsReport> raw;
  std::vector<eval::MetricsReport> normalized;
  for (const auto& rows : results) {
    for (const auto& r : rows) {
      summary.reports.push_back(r);
      (r.scale == eval::Scale::kRaw ? raw : normalized).push_back(r);
    }
  }
  eval::write_reports_csv(out_dir / "reports.csv", raw);
  eval::write_reports_csv(out_dir / "reports_normalized.csv", normalized);
  if (!raw.empty()) {
    const auto agg = eval::aggregate(raw);
    eval::write_aggregate_csv(out_dir / "aggregate.csv", agg);
    eval::write_aggregate_csv(out_dir / "aggregate_normalized.csv", eval::aggregate(normalized));

    std::filesystem::create_directories(out_dir / "figures");
    std::vector<Series> mae_series;
    std::vector<Series> rmse_series;
    std::map<std::string, std::size_t> index;
    for (const auto& row : agg) {
      if (row.noise != 0.0) continue;
      if (!index.count(row.model)) {
        index[row.model] = mae_series.size();
        mae_series.push_back({row.model, {}, {}});
        rmse_series.push_back({row.model, {}, {}});
      }
      const auto i = index[row.model];
      mae_series[i].x.push_back(row.density * 100.0);
      mae_series[i].y.push_back(row.mae_mean);
      rmse_series[i].x.push_back(row.density * 100.0);
      rmse_series[i].y.push_back(row.rmse_mean);
    }
    if (!mae_series.empty()) {
      write_line_plot_svg(out_dir / "figures" / "mae_vs_density.svg", "MAE vs density", "density (%)", "MAE",
                          mae_series);
      write_line_plot_svg(out_dir / "figures" / "rmse_vs_density.svg", "RMSE vs density", "density (%)", "RMSE",
                          rmse_series);
    }
    if (config.noise.size() > 1) {
      std::vector<Series> noise_series;
      std::map<std::string, std::size_t> by_group;
      for (const auto& row : agg) {
        const std::string name = row.model + " @" + fmt_g(row.density * 100.0) + "%";
        if (!by_group.count(name)) {
          by_group[name] = noise_series.size();
          noise_series.push_back({name, {}, {}});
        }
        auto& s = noise_series[by_group[name]];
        s.x.push_back(row.noise);
        s.y.push_back(row.mae_mean);
      }
      write_line_plot_svg(out_dir / "figures" / "mae_vs_noise.svg", "MAE vs noise ratio", "noise (%)", "MAE",
                          noise_series);
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------

SweepSummary sweep(const config::ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                   const RunOptions& options) {
  if (axis != "lambda" && axis != "dimension" && axis != "heads") {
    throw ConfigError("unknown sweep axis '" + axis + "' (expected lambda, dimension or heads)");
  }
  for (const auto& m : config.models) {
    if (m != "qosdiff") throw ConfigError("sweep axis '" + axis + "' applies to qosdiff only, not '" + m + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  auto integral = [&](double v) {
    if (!(v >= 1.0) || v != std::floor(v)) {
      throw ConfigError("sweep axis '" + axis + "' needs positive integers (got " + fmt_g(v) + ")");
    }
    return static_cast<long>(v);
  };

  SweepSummary out;
  out.axis = axis;
  out.values = values;
  const auto base = config.output;
  std::vector<config::ExperimentConfig> runs;
  for (double v : values) {
    auto c = config;
    if (axis == "lambda") {
      c.loss.lambda = v;
    } else if (axis == "dimension") {
      c.model.dim = integral(v);
    } else {
      c.model.heads = static_cast<int>(integral(v));
    }
    c.output = base / ("sweep_" + axis) / (axis + "_" + fmt_g(v));
    c.validate();
    runs.push_back(std::move(c));
  }

  std::ostringstream rows_csv;
  rows_csv << "axis,value,dataset,model,density,noise,seed,mae,rmse,scale\n";
  std::ostringstream agg_csv;
  agg_csv << "axis,value,dataset,model,density,noise,runs,mae_mean,mae_std,rmse_mean,rmse_std\n";
  std::map<double, Series> by_density;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto opts = options;
    opts.label_suffix = options.label_suffix + "[" + axis + "=" + fmt_g(values[i]) + "]";
    const auto summary = run(runs[i], opts);
    out.ok = out.ok && summary.ok();
    std::vector<eval::MetricsReport> raw;
    for (const auto& r : summary.reports) {
      if (r.scale != eval::Scale::kRaw) continue;
      raw.push_back(r);
      out.reports.push_back(r);
      rows_csv << axis << ',' << fmt_g(values[i]) << ',' << r.dataset << ',' << r.model << ',' << fmt_g(r.density)
               << ',' << fmt_g(r.noise) << ',' << r.seed << ',' << eval::format_number(r.mae) << ','
               << eval::format_number(r.rmse) << ",raw\n";
    }
    if (raw.empty()) continue;
    for (const auto& a : eval::aggregate(raw)) {
      agg_csv << axis << ',' << fmt_g(values[i]) << ',' << a.dataset << ',' << a.model << ',' << fmt_g(a.density)
              << ',' << fmt_g(a.noise) << ',' << a.runs << ',' << eval::format_number(a.mae_mean) << ','
              << eval::format_number(a.mae_std) << ',' << eval::format_number(a.rmse_mean) << ','
              << eval::format_number(a.rmse_std) << '\n';
      if (a.noise != 0.0) continue;
      auto& s = by_density[a.density];
      s.name = "density " + fmt_g(a.density * 100.0) + "%";
      s.x.push_back(values[i]);
      s.y.push_back(a.mae_mean);
    }
  }
  std::filesystem::create_directories(base);
  write_atomic(base / ("sweep_" + axis + "_reports.csv"), rows_csv.str());
  write_atomic(base / ("sweep_" + axis + ".csv"), agg_csv.str());
  std::vector<Series> series;
  for (auto& [d, s] : by_density) series.push_back(std::move(s));
  if (!series.empty()) {
    write_line_plot_svg(base / ("sweep_" + axis + ".svg"), "MAE vs " + axis, axis, "MAE", series);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string report(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() == "reports.csv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<eval::MetricsReport> rows;
  for (const auto& f : files) {
    for (auto& r : eval::read_reports_csv(f)) rows.push_back(std::move(r));
  }
  if (rows.empty()) return "no runs found in " + dir.string() + "\n";

  const auto agg = eval::aggregate(rows);
  std::ostringstream os;
  char cell[96];
  std::set<std::string> datasets;
  for (const auto& a : agg) datasets.insert(a.dataset);
  for (const auto& dataset : datasets) {
    std::vector<std::string> models;
    std::set<double> densities;
    std::map<std::pair<std::string, double>, const eval::AggregateRow*> clean;
    for (const auto& a : agg) {
      if (a.dataset != dataset || a.noise != 0.0) continue;
      if (std::find(models.begin(), models.end(), a.model) == models.end()) models.push_back(a.model);
      densities.insert(a.density);
      clean[{a.model, a.density}] = &a;
    }
    for (const char* metric : {"MAE", "RMSE"}) {
      os << dataset << " " << metric << " (raw scale, mean±std over seeds)\n";
      os << "model";
      for (double d : densities) os << '\t' << fmt_g(d * 100.0) << '%';
      os << '\n';
      for (const auto& m : models) {
        os << m;
        for (double d : densities) {
          const auto it = clean.find({m, d});
          if (it == clean.end()) {
            os << "\t-";
            continue;
          }
          const bool mae = std::string(metric) == "MAE";
          std::snprintf(cell, sizeof cell, "%.4f±%.4f", mae ? it->second->mae_mean : it->second->rmse_mean,
                        mae ? it->second->mae_std : it->second->rmse_std);
          os << '\t' << cell;
        }
        os << '\n';
      }
      os << '\n';
    }
    bool noisy = false;
    for (const auto& a : agg) noisy = noisy || (a.dataset == dataset && a.noise != 0.0);
    if (noisy) {
      os << dataset << " MAE under identity corruption (degradation %)\n";
      for (const auto& a : agg) {
        if (a.dataset != dataset) continue;
        std::snprintf(cell, sizeof cell, "%.4f±%.4f", a.mae_mean, a.mae_std);
        os << a.model << " @" << fmt_g(a.density * 100.0) << "%\tnoise " << fmt_g(a.noise) << "%\t" << cell;
        if (a.degradation) os << '\t' << eval::format_number(*a.degradation);
        os << '\n';
      }
      os << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------

void write_line_plot_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 55;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (double x : s.x) x0 = std::min(x0, x), x1 = std::max(x1, x);
    for (double y : s.y) y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5 * std::max(std::abs(y0), 1e-3), y1 += 0.5 * std::max(std::abs(y1), 1e-3);
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };

  std::ostringstream os;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                L, T, W - L - R, H - T - B);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.4g</text>\n", px(xv),
                  H - B + 18, xv);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n", L - 6, py(yv) + 4,
                  yv);
    os << buf;
  }
  os << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << esc(x_label)
     << "</text>\n";
  os << "<text transform=\"translate(16," << T + (H - T - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << esc(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 10];
    std::vector<std::size_t> order(s.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto i : order) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    for (auto i : order) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", px(s.x[i]),
                    py(s.y[i]), color);
      os << buf;
    }
    const double ly = T + 16 + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%.1f\" x2=\"%g\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  W - R + 12, ly, W - R + 32, ly, color);
    os << buf;
    os << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << esc(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  write_atomic(path, os.str());
}

}  // namespace qosdiff::experiment
