#include "qosdiff/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace qosdiff::config {

namespace pt = boost::property_tree;
using data::ConfigError;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"dataset",
       {"format", "name", "matrix", "user_list", "service_list", "csv", "user_fields", "service_fields",
        "synthetic_users", "synthetic_services", "synthetic_observed", "synthetic_rank", "synthetic_user_groups",
        "synthetic_service_groups", "synthetic_noise", "synthetic_seed"}},
      {"experiment", {"models", "densities", "seeds", "noise", "output"}},
      {"qosdiff",
       {"dim", "heads", "hidden", "ffn", "out", "disc_hidden", "tau", "gamma", "leaky_slope", "keep_probability",
        "lambda", "batch_size", "max_epochs", "patience", "gen_lr", "gen_weight_decay", "disc_lr",
        "disc_weight_decay", "beta1", "beta2", "eps"}},
      {"baselines",
       {"top_k", "uipcc_weight", "factors", "reg", "lr", "init_std", "max_epochs", "patience"}},
  };
  return s;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (boost::algorithm::trim_copy(s).empty()) return out;
  boost::algorithm::split(out, s, boost::algorithm::is_any_of(","));
  for (auto& x : out) boost::algorithm::trim(x);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += xs[i];
    } else if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': integer out of range '" + v + "'");
  }
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section) : section_(std::move(section)) {
    if (auto child = tree.get_child_optional(section_)) node_ = &*child;
  }

  template <typename F>
  void get(const std::string& key, F&& apply) const {
    if (!node_) return;
    if (auto v = node_->get_optional<std::string>(pt::ptree::path_type(key, '\0'))) {
      apply(section_ + "." + key, boost::algorithm::trim_copy(*v));
    }
  }

  void number(const std::string& key, double& out) const {
    get(key, [&](const std::string& k, const std::string& v) { out = to_double(k, v); });
  }
  template <typename I>
  void count(const std::string& key, I& out) const {
    get(key, [&](const std::string& k, const std::string& v) { out = static_cast<I>(to_count(k, v)); });
  }
  void text(const std::string& key, std::string& out) const {
    get(key, [&](const std::string&, const std::string& v) { out = v; });
  }
  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) const {
    get(key, [&](const std::string&, const std::string& v) {
      std::filesystem::path p(v);
      out = (p.is_relative() && !base.empty() && !v.empty()) ? base / p : p;
    });
  }
  void list(const std::string& key, std::vector<std::string>& out) const {
    get(key, [&](const std::string&, const std::string& v) { out = split_list(v); });
  }

 private:
  std::string section_;
  const pt::ptree* node_ = nullptr;
};

void check_unknown_keys(const pt::ptree& tree) {
  for (const auto& [section, node] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) {
      if (node.empty()) throw ConfigError("config key '" + section + "' outside any section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : node) {
      if (!it->second.count(key)) throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& d = dataset;
  if (d.format == "wsdream") {
    if (d.matrix.empty()) throw ConfigError("dataset.matrix is required for format wsdream");
    if (d.user_list.empty() != d.service_list.empty()) {
      throw ConfigError("dataset.user_list and dataset.service_list must be given together");
    }
  } else if (d.format == "csv") {
    if (d.csv.empty()) throw ConfigError("dataset.csv is required for format csv");
  } else if (d.format == "synthetic") {
    const auto& s = d.synthetic;
    if (s.users < 2 || s.services < 2) throw ConfigError("synthetic dataset needs at least 2 users and services");
    if (!(s.observed_fraction > 0.0 && s.observed_fraction <= 1.0)) {
      throw ConfigError("dataset.synthetic_observed must lie in (0, 1]");
    }
    if (s.rank < 1 || s.user_groups < 1 || s.service_groups < 1) {
      throw ConfigError("synthetic rank and group counts must be positive");
    }
    if (!(s.noise >= 0.0)) throw ConfigError("dataset.synthetic_noise must be non-negative");
  } else {
    throw ConfigError("dataset.format must be wsdream, csv or synthetic (got '" + d.format + "')");
  }

  if (models.empty()) throw ConfigError("experiment.models is empty");
  std::set<std::string> seen_models;
  for (const auto& m : models) {
    if (std::find(known_models().begin(), known_models().end(), m) == known_models().end()) {
      throw ConfigError("unknown model '" + m + "' (expected qosdiff, upcc, ipcc, uipcc, pmf or biasmf)");
    }
    if (!seen_models.insert(m).second) throw ConfigError("model '" + m + "' listed twice");
  }
  if (densities.empty()) throw ConfigError("experiment.densities is empty");
  for (double x : densities) {
    if (!(x > 0.0 && x <= 1.0)) throw ConfigError("density " + fmt(x) + " outside (0, 1]");
  }
  if (std::set<double>(densities.begin(), densities.end()).size() != densities.size()) {
    throw ConfigError("experiment.densities has duplicates");
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("experiment.seeds has duplicates");
  }
  if (noise.empty()) throw ConfigError("experiment.noise is empty (use 0 for clean evaluation only)");
  for (double p : noise) {
    if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("noise level " + fmt(p) + " outside [0, 100]");
  }
  if (std::set<double>(noise.begin(), noise.end()).size() != noise.size()) {
    throw ConfigError("experiment.noise has duplicates");
  }
  if (output.empty()) throw ConfigError("experiment.output is empty");

  const auto& m = model;
  if (m.dim <= 2) throw ConfigError("qosdiff.dim must exceed 2 (the schedule needs alpha1 > 0)");
  if (m.heads < 1 || m.dim % m.heads != 0) throw ConfigError("qosdiff.heads must divide qosdiff.dim");
  if (m.hidden % m.heads != 0) throw ConfigError("qosdiff.heads must divide qosdiff.hidden");
  if (m.hidden < 1 || m.ffn < 1 || m.out < 1 || m.disc_hidden < 1) {
    throw ConfigError("qosdiff layer widths must be positive");
  }
  if (!(m.tau >= 0.0)) throw ConfigError("qosdiff.tau must be non-negative");
  if (!(m.gamma > 0.0)) throw ConfigError("qosdiff.gamma must be positive");
  if (!(m.leaky_slope >= 0.0)) throw ConfigError("qosdiff.leaky_slope must be non-negative");
  if (!(m.keep_probability > 0.0 && m.keep_probability <= 1.0)) {
    throw ConfigError("qosdiff.keep_probability must lie in (0, 1]");
  }
  loss.validate();

  const auto& b = baselines;
  if (b.neighbor.top_k < 1) throw ConfigError("baselines.top_k must be positive");
  if (!(b.uipcc_weight >= 0.0 && b.uipcc_weight <= 1.0)) throw ConfigError("baselines.uipcc_weight outside [0, 1]");
  if (b.factor.factors < 1) throw ConfigError("baselines.factors must be positive");
  if (!(b.factor.reg >= 0.0)) throw ConfigError("baselines.reg must be non-negative");
  if (!(b.factor.lr > 0.0)) throw ConfigError("baselines.lr must be positive");
  if (!(b.factor.init_std >= 0.0)) throw ConfigError("baselines.init_std must be non-negative");
  if (b.factor.max_epochs < 1) throw ConfigError("baselines.max_epochs must be positive");
  if (b.factor.patience < 1) throw ConfigError("baselines.patience must be positive");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& err) {
    throw ConfigError(std::string("config syntax: ") + err.what());
  }
  check_unknown_keys(tree);

  ExperimentConfig c;
  const Reader ds(tree, "dataset");
  ds.text("format", c.dataset.format);
  ds.text("name", c.dataset.name);
  ds.path("matrix", c.dataset.matrix, base_dir);
  ds.path("user_list", c.dataset.user_list, base_dir);
  ds.path("service_list", c.dataset.service_list, base_dir);
  ds.path("csv", c.dataset.csv, base_dir);
  ds.list("user_fields", c.dataset.user_fields);
  ds.list("service_fields", c.dataset.service_fields);
  auto& syn = c.dataset.synthetic;
  ds.count("synthetic_users", syn.users);
  ds.count("synthetic_services", syn.services);
  ds.number("synthetic_observed", syn.observed_fraction);
  ds.count("synthetic_rank", syn.rank);
  ds.count("synthetic_user_groups", syn.user_groups);
  ds.count("synthetic_service_groups", syn.service_groups);
  ds.number("synthetic_noise", syn.noise);
  ds.count("synthetic_seed", syn.seed);

  const Reader ex(tree, "experiment");
  ex.list("models", c.models);
  ex.get("densities", [&](const std::string& k, const std::string& v) {
    c.densities.clear();
    for (const auto& x : split_list(v)) c.densities.push_back(to_double(k, x));
  });
  ex.get("seeds", [&](const std::string& k, const std::string& v) {
    c.seeds.clear();
    for (const auto& x : split_list(v)) c.seeds.push_back(to_count(k, x));
  });
  ex.get("noise", [&](const std::string& k, const std::string& v) {
    c.noise.clear();
    for (const auto& x : split_list(v)) c.noise.push_back(to_double(k, x));
  });
  ex.get("output", [&](const std::string&, const std::string& v) { c.output = v; });

  const Reader q(tree, "qosdiff");
  q.count("dim", c.model.dim);
  q.count("heads", c.model.heads);
  q.count("hidden", c.model.hidden);
  q.count("ffn", c.model.ffn);
  q.count("out", c.model.out);
  q.count("disc_hidden", c.model.disc_hidden);
  q.number("tau", c.model.tau);
  q.number("gamma", c.model.gamma);
  q.number("leaky_slope", c.model.leaky_slope);
  q.number("keep_probability", c.model.keep_probability);
  q.number("lambda", c.loss.lambda);
  q.count("batch_size", c.loss.batch_size);
  q.count("max_epochs", c.loss.max_epochs);
  q.count("patience", c.loss.patience);
  q.number("gen_lr", c.loss.generator_optimizer.lr);
  q.number("gen_weight_decay", c.loss.generator_optimizer.weight_decay);
  q.number("disc_lr", c.loss.discriminator_optimizer.lr);
  q.number("disc_weight_decay", c.loss.discriminator_optimizer.weight_decay);
  for (auto* o : {&c.loss.generator_optimizer, &c.loss.discriminator_optimizer}) {
    q.number("beta1", o->beta1);
    q.number("beta2", o->beta2);
    q.number("eps", o->eps);
  }

  const Reader b(tree, "baselines");
  b.count("top_k", c.baselines.neighbor.top_k);
  b.number("uipcc_weight", c.baselines.uipcc_weight);
  b.count("factors", c.baselines.factor.factors);
  b.number("reg", c.baselines.factor.reg);
  b.number("lr", c.baselines.factor.lr);
  b.number("init_std", c.baselines.factor.init_std);
  b.count("max_epochs", c.baselines.factor.max_epochs);
  b.count("patience", c.baselines.factor.patience);

  if (c.dataset.name.empty()) c.dataset.name = c.dataset.format;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.parent_path());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  const auto& d = c.dataset;
  const auto& s = d.synthetic;
  os << "[dataset]\n"
     << "format = " << d.format << "\n"
     << "name = " << d.name << "\n"
     << "matrix = " << d.matrix.string() << "\n"
     << "user_list = " << d.user_list.string() << "\n"
     << "service_list = " << d.service_list.string() << "\n"
     << "csv = " << d.csv.string() << "\n"
     << "user_fields = " << join(d.user_fields) << "\n"
     << "service_fields = " << join(d.service_fields) << "\n"
     << "synthetic_users = " << s.users << "\n"
     << "synthetic_services = " << s.services << "\n"
     << "synthetic_observed = " << fmt(s.observed_fraction) << "\n"
     << "synthetic_rank = " << s.rank << "\n"
     << "synthetic_user_groups = " << s.user_groups << "\n"
     << "synthetic_service_groups = " << s.service_groups << "\n"
     << "synthetic_noise = " << fmt(s.noise) << "\n"
     << "synthetic_seed = " << s.seed << "\n\n";
  os << "[experiment]\n"
     << "models = " << join(c.models) << "\n"
     << "densities = " << join(c.densities) << "\n"
     << "seeds = " << join(c.seeds) << "\n"
     << "noise = " << join(c.noise) << "\n"
     << "output = " << c.output.string() << "\n\n";
  const auto& m = c.model;
  const auto& l = c.loss;
  if (l.generator_optimizer.beta1 != l.discriminator_optimizer.beta1 ||
      l.generator_optimizer.beta2 != l.discriminator_optimizer.beta2 ||
      l.generator_optimizer.eps != l.discriminator_optimizer.eps) {
    throw ConfigError("to_ini: generator and discriminator must share beta1, beta2 and eps");
  }
  os << "[qosdiff]\n"
     << "dim = " << m.dim << "\n"
     << "heads = " << m.heads << "\n"
     << "hidden = " << m.hidden << "\n"
     << "ffn = " << m.ffn << "\n"
     << "out = " << m.out << "\n"
     << "disc_hidden = " << m.disc_hidden << "\n"
     << "tau = " << fmt(m.tau) << "\n"
     << "gamma = " << fmt(m.gamma) << "\n"
     << "leaky_slope = " << fmt(m.leaky_slope) << "\n"
     << "keep_probability = " << fmt(m.keep_probability) << "\n"
     << "lambda = " << fmt(l.lambda) << "\n"
     << "batch_size = " << l.batch_size << "\n"
     << "max_epochs = " << l.max_epochs << "\n"
     << "patience = " << l.patience << "\n"
     << "gen_lr = " << fmt(l.generator_optimizer.lr) << "\n"
     << "gen_weight_decay = " << fmt(l.generator_optimizer.weight_decay) << "\n"
     << "disc_lr = " << fmt(l.discriminator_optimizer.lr) << "\n"
     << "disc_weight_decay = " << fmt(l.discriminator_optimizer.weight_decay) << "\n"
     << "beta1 = " << fmt(l.generator_optimizer.beta1) << "\n"
     << "beta2 = " << fmt(l.generator_optimizer.beta2) << "\n"
     << "eps = " << fmt(l.generator_optimizer.eps) << "\n\n";
  const auto& b = c.baselines;
  os << "[baselines]\n"
     << "top_k = " << b.neighbor.top_k << "\n"
     << "uipcc_weight = " << fmt(b.uipcc_weight) << "\n"
     << "factors = " << b.factor.factors << "\n"
     << "reg = " << fmt(b.factor.reg) << "\n"
     << "lr = " << fmt(b.factor.lr) << "\n"
     << "init_std = " << fmt(b.factor.init_std) << "\n"
     << "max_epochs = " << b.factor.max_epochs << "\n"
     << "patience = " << b.factor.patience << "\n";
  return os.str();
}

bool equivalent(const ExperimentConfig& a, const ExperimentConfig& b) { return to_ini(a) == to_ini(b); }

data::QoSDataset load_dataset(const DatasetSpec& spec) {
  data::QoSDataset ds;
  if (spec.format == "wsdream") {
    ds = data::load_wsdream(spec.matrix, spec.user_list, spec.service_list,
                            spec.user_list.empty() ? std::vector<std::string>{} : spec.user_fields,
                            spec.service_list.empty() ? std::vector<std::string>{} : spec.service_fields);
  } else if (spec.format == "csv") {
    ds = data::load_triplets_csv(spec.csv, spec.user_fields, spec.service_fields);
  } else if (spec.format == "synthetic") {
    ds = data::make_synthetic(spec.synthetic);
  } else {
    throw ConfigError("unknown dataset format '" + spec.format + "'");
  }
  ds.name = spec.name.empty() ? spec.format : spec.name;
  return data::normalize(ds);
}

}  // namespace qosdiff::config
