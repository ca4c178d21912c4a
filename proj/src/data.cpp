#include "qosdiff/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace qosdiff::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string normalize_header(const std::string& s) {
  std::string out;
  for (char c : trim(s)) {
    if (c == '[' || c == ']') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return trim(out);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open " + p.string());
  return in;
}

bool is_separator_line(const std::string& line) {
  const std::string t = trim(line);
  return !t.empty() && t.find_first_not_of("=-") == std::string::npos;
}

/// Resolves requested attribute names against header columns. A request
/// matches a column whose normalized name equals it or ends with " <request>".
std::vector<std::size_t> resolve_columns(const std::vector<std::string>& header, const std::vector<std::string>& wanted,
                                         const std::string& what) {
  std::vector<std::string> names;
  names.reserve(header.size());
  for (const auto& h : header) names.push_back(normalize_header(h));
  std::vector<std::size_t> cols;
  for (const auto& w : wanted) {
    const std::string key = normalize_header(w);
    std::size_t found = header.size();
    for (std::size_t c = 0; c < names.size() && found == header.size(); ++c) {
      if (names[c] == key) found = c;
    }
    for (std::size_t c = 0; c < names.size() && found == header.size(); ++c) {
      const std::string suffix = " " + key;
      if (names[c].size() > suffix.size() && names[c].compare(names[c].size() - suffix.size(), suffix.size(), suffix) == 0) {
        found = c;
      }
    }
    if (found == header.size()) throw ConfigError("unknown " + what + " attribute '" + w + "'");
    cols.push_back(found);
  }
  return cols;
}

struct ContextTable {
  std::vector<std::vector<std::size_t>> rows;
  std::vector<std::size_t> vocab_sizes;
};

ContextTable load_entity_list(const std::filesystem::path& path, const std::vector<std::string>& fields,
                              const std::string& what) {
  auto in = open_or_throw(path);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!trim(line).empty()) header = split(line, '\t');
  }
  if (header.empty()) throw ParseError(path.string() + ": missing header row");
  const auto cols = resolve_columns(header, fields, what);
  std::vector<Vocabulary> vocabs(cols.size());
  ContextTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || is_separator_line(line)) continue;
    const auto cells = split(line, '\t');
    std::vector<std::size_t> row;
    row.reserve(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] >= cells.size()) {
        throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                         " columns, attribute '" + fields[k] + "' needs column " + std::to_string(cols[k] + 1));
      }
      row.push_back(vocabs[k].add(cells[cols[k]]));
    }
    table.rows.push_back(std::move(row));
  }
  for (const auto& v : vocabs) table.vocab_sizes.push_back(v.size());
  return table;
}

double max_value(const std::vector<Triplet>& ts) {
  double mx = 0.0;
  for (const auto& t : ts) mx = std::max(mx, t.value);
  return mx;
}

std::size_t floor_count(double x) { return static_cast<std::size_t>(std::floor(x + 1e-9)); }

}  // namespace

// ---------------------------------------------------------------------------

std::size_t Vocabulary::add(const std::string& value) {
  return index_.try_emplace(value, index_.size() + 1).first->second;
}

std::size_t Vocabulary::lookup(const std::string& value) const {
  const auto it = index_.find(value);
  return it == index_.end() ? 0 : it->second;
}

void QoSDataset::validate() const {
  if (user_context.size() != users) throw std::logic_error("user context rows != user count");
  if (service_context.size() != services) throw std::logic_error("service context rows != service count");
  if (user_fields.size() != user_vocab_sizes.size() || service_fields.size() != service_vocab_sizes.size()) {
    throw std::logic_error("field list and vocabulary size list disagree");
  }
  double mx = 0.0;
  for (const auto& t : triplets) {
    if (t.user >= users || t.service >= services) throw std::logic_error("triplet index out of range");
    if (!(t.value > 0.0)) throw std::logic_error("triplet value must be strictly positive");
    mx = std::max(mx, t.value);
  }
  if (!triplets.empty() && mx != global_max && !normalized) throw std::logic_error("global_max is not the maximum value");
  for (const auto& row : user_context) {
    if (row.size() != user_vocab_sizes.size()) throw std::logic_error("user context row width mismatch");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] >= user_vocab_sizes[k]) throw std::logic_error("user context index exceeds vocabulary");
    }
  }
  for (const auto& row : service_context) {
    if (row.size() != service_vocab_sizes.size()) throw std::logic_error("service context row width mismatch");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] >= service_vocab_sizes[k]) throw std::logic_error("service context index exceeds vocabulary");
    }
  }
}

QoSDataset load_wsdream(const std::filesystem::path& matrix_path, const std::filesystem::path& user_list_path,
                        const std::filesystem::path& service_list_path, const std::vector<std::string>& user_fields,
                        const std::vector<std::string>& service_fields) {
  QoSDataset ds;
  ds.name = matrix_path.stem().string();

  ContextTable users_ctx;
  ContextTable services_ctx;
  const bool have_users = !user_list_path.empty();
  const bool have_services = !service_list_path.empty();
  if (!have_users && !user_fields.empty()) throw ConfigError("user attributes requested without a user list");
  if (!have_services && !service_fields.empty()) throw ConfigError("service attributes requested without a service list");
  if (have_users) users_ctx = load_entity_list(user_list_path, user_fields, "user");
  if (have_services) services_ctx = load_entity_list(service_list_path, service_fields, "service");

  auto in = open_or_throw(matrix_path);
  std::string line;
  std::size_t width = have_services ? services_ctx.rows.size() : 0;
  std::size_t row = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream is(line);
    std::string tok;
    std::size_t col = 0;
    while (is >> tok) {
      double v = 0.0;
      if (!parse_double(tok, v)) {
        throw ParseError(matrix_path.string() + ": row " + std::to_string(line_no) + ": non-numeric value '" + tok + "'");
      }
      if (v > 0.0) ds.triplets.push_back({row, col, v});
      ++col;
    }
    if (width == 0) width = col;
    if (col != width) {
      throw ParseError(matrix_path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(col) +
                       " values, expected " + std::to_string(width));
    }
    ++row;
  }
  if (row == 0) throw ParseError(matrix_path.string() + ": no observations");
  ds.users = row;
  ds.services = width;
  if (have_users && users_ctx.rows.size() != ds.users) {
    throw ParseError(user_list_path.string() + ": lists " + std::to_string(users_ctx.rows.size()) +
                     " users but the matrix has " + std::to_string(ds.users) + " rows");
  }
  if (have_services && services_ctx.rows.size() != ds.services) {
    throw ParseError(service_list_path.string() + ": lists " + std::to_string(services_ctx.rows.size()) +
                     " services but the matrix has " + std::to_string(ds.services) + " columns");
  }
  ds.global_max = max_value(ds.triplets);
  ds.user_fields = user_fields;
  ds.service_fields = service_fields;
  ds.user_vocab_sizes = users_ctx.vocab_sizes;
  ds.service_vocab_sizes = services_ctx.vocab_sizes;
  ds.user_context = have_users ? std::move(users_ctx.rows) : std::vector<std::vector<std::size_t>>(ds.users);
  ds.service_context = have_services ? std::move(services_ctx.rows) : std::vector<std::vector<std::size_t>>(ds.services);
  ds.validate();
  return ds;
}

QoSDataset load_triplets_csv(const std::filesystem::path& path, const std::vector<std::string>& user_fields,
                             const std::vector<std::string>& service_fields) {
  auto in = open_or_throw(path);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!trim(line).empty()) header = split(line, ',');
  }
  if (header.empty()) throw ParseError(path.string() + ": no observations");
  if (header.size() < 3) throw ParseError(path.string() + ": header needs user_id,service_id,value");
  const auto ucols = resolve_columns(header, user_fields, "user");
  const auto scols = resolve_columns(header, service_fields, "service");

  QoSDataset ds;
  ds.name = path.stem().string();
  ds.user_fields = user_fields;
  ds.service_fields = service_fields;
  std::map<std::string, std::size_t> user_ids;
  std::map<std::string, std::size_t> service_ids;
  std::vector<Vocabulary> uvocab(ucols.size());
  std::vector<Vocabulary> svocab(scols.size());
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(header.size()));
    }
    double v = 0.0;
    if (!parse_double(cells[2], v) || !(v > 0.0)) {
      ++ds.ingest.rejected_rows;
      continue;
    }
    auto [uit, new_user] = user_ids.try_emplace(cells[0], user_ids.size());
    auto [sit, new_service] = service_ids.try_emplace(cells[1], service_ids.size());
    if (new_user) {
      std::vector<std::size_t> row;
      for (std::size_t k = 0; k < ucols.size(); ++k) row.push_back(uvocab[k].add(cells[ucols[k]]));
      ds.user_context.push_back(std::move(row));
    }
    if (new_service) {
      std::vector<std::size_t> row;
      for (std::size_t k = 0; k < scols.size(); ++k) row.push_back(svocab[k].add(cells[scols[k]]));
      ds.service_context.push_back(std::move(row));
    }
    const Triplet t{uit->second, sit->second, v};
    auto [pos, fresh] = seen.try_emplace({t.user, t.service}, ds.triplets.size());
    if (fresh) {
      ds.triplets.push_back(t);
    } else {
      ds.triplets[pos->second] = t;
      ++ds.ingest.duplicate_pairs;
    }
  }
  if (ds.triplets.empty()) throw ParseError(path.string() + ": no observations");
  ds.users = user_ids.size();
  ds.services = service_ids.size();
  ds.global_max = max_value(ds.triplets);
  for (const auto& v : uvocab) ds.user_vocab_sizes.push_back(v.size());
  for (const auto& v : svocab) ds.service_vocab_sizes.push_back(v.size());
  ds.validate();
  return ds;
}

QoSDataset normalize(const QoSDataset& ds) {
  if (!(ds.global_max > 0.0)) throw std::invalid_argument("normalize: global maximum must be positive");
  if (ds.normalized) return ds;
  QoSDataset out = ds;
  for (auto& t : out.triplets) t.value /= ds.global_max;
  out.normalized = true;
  return out;
}

QoSDataset denormalize(const QoSDataset& ds) {
  if (!ds.normalized) return ds;
  QoSDataset out = ds;
  for (auto& t : out.triplets) t.value *= ds.global_max;
  out.normalized = false;
  return out;
}

std::size_t cell_count(const QoSDataset& ds, double fraction) {
  return floor_count(fraction * static_cast<double>(ds.users) * static_cast<double>(ds.services));
}

Split make_split(const QoSDataset& ds, double density, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("make_split: density must be in (0, 1]");
  const std::size_t n_train = cell_count(ds, density);
  const std::size_t n_val = cell_count(ds, kValidationFraction);
  const std::size_t available = ds.triplets.size();
  if (n_train + n_val > available) {
    throw std::invalid_argument("make_split: density " + std::to_string(density) + " needs " +
                                std::to_string(n_train + n_val) + " observed entries (train " + std::to_string(n_train) +
                                " + validation " + std::to_string(n_val) + "), only " + std::to_string(available) +
                                " available");
  }
  std::vector<std::size_t> order(available);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Split s;
  s.density = density;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

void write_split_manifest(const Split& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,section\n";
  for (auto i : split.train) out << i << ",train\n";
  for (auto i : split.val) out << i << ",val\n";
  for (auto i : split.test) out << i << ",test\n";
}

CorruptedTestSet corrupt_test(const Split& split, const QoSDataset& ds, double noise_percent, std::uint64_t seed) {
  if (!(noise_percent >= 0.0 && noise_percent <= 100.0)) {
    throw std::invalid_argument("corrupt_test: noise ratio must be in [0, 100]");
  }
  CorruptedTestSet out;
  out.noise_ratio = noise_percent;
  out.triplets = select(ds, split.test);
  const std::size_t n = out.triplets.size();
  const std::size_t k = floor_count(noise_percent / 100.0 * static_cast<double>(n));
  if (k == 0) return out;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(k);
  std::sort(positions.begin(), positions.end());

  std::uniform_int_distribution<std::size_t> pick_user(0, ds.users - 1);
  std::uniform_int_distribution<std::size_t> pick_service(0, ds.services - 1);
  for (std::size_t pos : positions) {
    out.triplets[pos].user = pick_user(rng);
    out.triplets[pos].service = pick_service(rng);
  }
  out.perturbed = std::move(positions);
  return out;
}

std::vector<Triplet> select(const QoSDataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<Triplet> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.triplets.at(i));
  return out;
}

QoSDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.users == 0 || spec.services == 0 || spec.rank == 0) {
    throw std::invalid_argument("make_synthetic: users, services and rank must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double inv_sqrt_rank = 1.0 / std::sqrt(static_cast<double>(spec.rank));

  QoSDataset ds;
  ds.name = "synthetic";
  ds.users = spec.users;
  ds.services = spec.services;
  ds.user_fields = {"group"};
  ds.service_fields = {"group"};
  ds.user_vocab_sizes = {spec.user_groups + 1};
  ds.service_vocab_sizes = {spec.service_groups + 1};

  std::vector<double> user_group_effect(spec.user_groups);
  std::vector<double> service_group_effect(spec.service_groups);
  for (auto& e : user_group_effect) e = 0.5 * normal(rng);
  for (auto& e : service_group_effect) e = 0.5 * normal(rng);

  std::vector<std::vector<double>> uf(spec.users, std::vector<double>(spec.rank));
  std::vector<std::vector<double>> sf(spec.services, std::vector<double>(spec.rank));
  for (std::size_t i = 0; i < spec.users; ++i) {
    for (auto& x : uf[i]) x = normal(rng) * inv_sqrt_rank;
    ds.user_context.push_back({1 + i % spec.user_groups});
  }
  for (std::size_t j = 0; j < spec.services; ++j) {
    for (auto& x : sf[j]) x = normal(rng) * inv_sqrt_rank;
    ds.service_context.push_back({1 + j % spec.service_groups});
  }
  for (std::size_t i = 0; i < spec.users; ++i) {
    for (std::size_t j = 0; j < spec.services; ++j) {
      const double draw = unit(rng);
      const double eps = normal(rng);
      if (draw >= spec.observed_fraction) continue;
      double logit = 0.0;
      for (std::size_t r = 0; r < spec.rank; ++r) logit += uf[i][r] * sf[j][r];
      logit += user_group_effect[i % spec.user_groups] + service_group_effect[j % spec.service_groups];
      ds.triplets.push_back({i, j, std::exp(0.7 * logit + spec.noise * eps)});
    }
  }
  ds.global_max = max_value(ds.triplets);
  ds.validate();
  return ds;
}

}  // namespace qosdiff::data
