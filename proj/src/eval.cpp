#include "qosdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace qosdiff::eval {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("metric: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " truths");
  }
  if (pred.empty()) throw std::invalid_argument("metric: empty input");
}

std::string write_tmp_then_rename(const std::filesystem::path& path, const std::string& body) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, path);
  return path.string();
}

}  // namespace

std::string to_string(Scale scale) { return scale == Scale::kRaw ? "raw" : "normalized"; }

Scale parse_scale(const std::string& s) {
  if (s == "raw") return Scale::kRaw;
  if (s == "normalized") return Scale::kNormalized;
  throw std::invalid_argument("unknown scale '" + s + "'");
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(truth[i] - pred[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

Metrics evaluate(Predictor& predictor, std::span<const data::Triplet> test, const data::QoSDataset& ds, Scale scale) {
  if (!ds.normalized) throw std::invalid_argument("evaluate: dataset must be normalized");
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<double> pred = predictor.predict(test);
  if (pred.size() != test.size()) throw std::logic_error("evaluate: predictor returned the wrong number of values");
  std::vector<double> truth(test.size());
  const double factor = scale == Scale::kRaw ? ds.global_max : 1.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    pred[i] = std::clamp(pred[i], 0.0, 1.0) * factor;
    truth[i] = test[i].value * factor;
  }
  return {mae(pred, truth), rmse(pred, truth)};
}

double degradation(double mae_p, double mae_0) {
  if (!(mae_0 > 0.0)) throw std::invalid_argument("degradation: baseline MAE must be positive");
  return (mae_p - mae_0) / mae_0 * 100.0;
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  using Key = std::tuple<std::string, std::string, double, int, double>;
  std::map<Key, std::vector<const MetricsReport*>> groups;
  for (const auto& r : reports) {
    groups[{r.dataset, r.model, r.density, static_cast<int>(r.scale), r.noise}].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  std::map<std::tuple<std::string, std::string, double, int>, double> clean_mae;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.dataset = std::get<0>(key);
    row.model = std::get<1>(key);
    row.density = std::get<2>(key);
    row.scale = static_cast<Scale>(std::get<3>(key));
    row.noise = std::get<4>(key);
    row.runs = members.size();
    std::vector<double> maes;
    std::vector<double> rmses;
    for (const auto* m : members) {
      maes.push_back(m->mae);
      rmses.push_back(m->rmse);
    }
    for (double x : maes) row.mae_mean += x;
    for (double x : rmses) row.rmse_mean += x;
    row.mae_mean /= static_cast<double>(maes.size());
    row.rmse_mean /= static_cast<double>(rmses.size());
    row.mae_std = sample_std(maes);
    row.rmse_std = sample_std(rmses);
    if (row.noise == 0.0) clean_mae[{row.dataset, row.model, row.density, static_cast<int>(row.scale)}] = row.mae_mean;
    rows.push_back(row);
  }
  for (auto& row : rows) {
    const auto it = clean_mae.find({row.dataset, row.model, row.density, static_cast<int>(row.scale)});
    if (row.noise != 0.0 && it != clean_mae.end() && it->second > 0.0) {
      row.degradation = degradation(row.mae_mean, it->second);
    }
  }
  return rows;
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

namespace {

std::string format_key(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  os << "dataset,model,density,noise,seed,mae,rmse,scale\n";
  for (const auto& r : reports) {
    os << r.dataset << ',' << r.model << ',' << format_key(r.density) << ',' << format_key(r.noise) << ',' << r.seed
       << ',' << format_number(r.mae) << ',' << format_number(r.rmse) << ',' << to_string(r.scale) << '\n';
  }
  write_tmp_then_rename(path, os.str());
}

std::vector<MetricsReport> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("dataset,model,density,noise,seed,mae,rmse,scale", 0) != 0) {
    throw data::ParseError(path.string() + ": unexpected report header");
  }
  std::vector<MetricsReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw data::ParseError(path.string() + ": malformed row " + std::to_string(line_no));
    MetricsReport r;
    r.dataset = cells[0];
    r.model = cells[1];
    r.density = std::stod(cells[2]);
    r.noise = std::stod(cells[3]);
    r.seed = std::stoull(cells[4]);
    r.mae = std::stod(cells[5]);
    r.rmse = std::stod(cells[6]);
    r.scale = parse_scale(cells[7]);
    out.push_back(r);
  }
  return out;
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "dataset,model,density,noise,scale,runs,mae_mean,mae_std,rmse_mean,rmse_std,degradation\n";
  for (const auto& r : rows) {
    os << r.dataset << ',' << r.model << ',' << format_key(r.density) << ',' << format_key(r.noise) << ','
       << to_string(r.scale) << ',' << r.runs << ',' << format_number(r.mae_mean) << ',' << format_number(r.mae_std)
       << ',' << format_number(r.rmse_mean) << ',' << format_number(r.rmse_std) << ','
       << (r.degradation ? format_number(*r.degradation) : std::string()) << '\n';
  }
  write_tmp_then_rename(path, os.str());
}

}  // namespace qosdiff::eval
