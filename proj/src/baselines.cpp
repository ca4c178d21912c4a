#include "qosdiff/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qosdiff::baselines {

namespace {

constexpr double kVarianceTolerance = 1e-12;
constexpr Eigen::Index kSimilarityBlock = 256;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Pearson from co-observed sums; shared by the scalar and bulk paths.
double pearson_from_sums(double n, double sx, double sy, double sxx, double syy, double sxy) {
  if (n < 2.0) return 0.0;
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  if (vx <= kVarianceTolerance * n * sxx || vy <= kVarianceTolerance * n * syy) return 0.0;
  const double r = (n * sxy - sx * sy) / std::sqrt(vx * vy);
  return std::clamp(r, -1.0, 1.0);
}

void check_index(std::size_t user, std::size_t service, std::size_t users, std::size_t services) {
  if (user >= users || service >= services) {
    throw std::out_of_range("baseline: pair (" + std::to_string(user) + ", " + std::to_string(service) +
                            ") outside the " + std::to_string(users) + "x" + std::to_string(services) + " matrix");
  }
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: vectors differ in length");
  double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    n += 1.0;
    sx += a[i];
    sy += b[i];
    sxx += a[i] * a[i];
    syy += b[i] * b[i];
    sxy += a[i] * b[i];
  }
  return pearson_from_sums(n, sx, sy, sxx, syy, sxy);
}

// ---------------------------------------------------------------------------

NeighborModel::NeighborModel(Side side, std::size_t users, std::size_t services, std::span<const data::Triplet> train,
                             NeighborConfig config)
    : side_(side), config_(config) {
  if (config_.top_k < 1) throw std::invalid_argument("NeighborModel: top_k must be at least 1");
  const std::size_t entities = side == Side::kUser ? users : services;
  items_ = side == Side::kUser ? services : users;
  const auto e = static_cast<Eigen::Index>(entities);
  const auto m = static_cast<Eigen::Index>(items_);

  RowMatrix x = RowMatrix::Zero(e, m);
  RowMatrix mask = RowMatrix::Zero(e, m);
  double total = 0.0;
  for (const auto& t : train) {
    check_index(t.user, t.service, users, services);
    const auto a = static_cast<Eigen::Index>(side == Side::kUser ? t.user : t.service);
    const auto j = static_cast<Eigen::Index>(side == Side::kUser ? t.service : t.user);
    x(a, j) = t.value;
    mask(a, j) = 1.0;
    total += t.value;
  }
  observers_.assign(items_, {});
  for (Eigen::Index a = 0; a < e; ++a) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (mask(a, j) > 0.0) observers_[static_cast<std::size_t>(j)].emplace_back(static_cast<std::size_t>(a), x(a, j));
    }
  }
  global_mean_ = train.empty() ? 0.0 : total / static_cast<double>(train.size());

  mean_.assign(entities, global_mean_);
  has_mean_.assign(entities, false);
  for (Eigen::Index a = 0; a < e; ++a) {
    const double cnt = mask.row(a).sum();
    if (cnt > 0) {
      mean_[static_cast<std::size_t>(a)] = x.row(a).sum() / cnt;
      has_mean_[static_cast<std::size_t>(a)] = true;
    }
  }

  // Co-observed sums for every pair via dense products, one row block at a time.
  const RowMatrix x2 = x.cwiseProduct(x);
  sim_ = Eigen::MatrixXd::Zero(e, e);
  for (Eigen::Index begin = 0; begin < e; begin += kSimilarityBlock) {
    const Eigen::Index rows = std::min(kSimilarityBlock, e - begin);
    const RowMatrix mb = mask.middleRows(begin, rows);
    const RowMatrix xb = x.middleRows(begin, rows);
    const RowMatrix n = mb * mask.transpose();
    const RowMatrix sx = xb * mask.transpose();
    const RowMatrix sy = mb * x.transpose();
    const RowMatrix sxx = x2.middleRows(begin, rows) * mask.transpose();
    const RowMatrix syy = mb * x2.transpose();
    const RowMatrix sxy = xb * x.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index a = begin + r;
      for (Eigen::Index b = a; b < e; ++b) {
        const double s = pearson_from_sums(n(r, b), sx(r, b), sy(r, b), sxx(r, b), syy(r, b), sxy(r, b));
        sim_(a, b) = s;
        sim_(b, a) = s;
      }
    }
  }
}

double NeighborModel::predict(std::size_t user, std::size_t service) const {
  const std::size_t a = side_ == Side::kUser ? user : service;
  const std::size_t j = side_ == Side::kUser ? service : user;
  if (a >= mean_.size() || j >= items_) {
    check_index(user, service, side_ == Side::kUser ? mean_.size() : items_,
                side_ == Side::kUser ? items_ : mean_.size());
  }
  const auto ai = static_cast<Eigen::Index>(a);
  // Top-k positively correlated entities among those that observed j.
  struct Candidate {
    double sim;
    std::size_t entity;
    double value;
  };
  std::vector<Candidate> candidates;
  for (const auto& [v, r] : observers_[j]) {
    if (v == a) continue;
    const double s = sim_(ai, static_cast<Eigen::Index>(v));
    if (s > 0.0) candidates.push_back({s, v, r});
  }
  const std::size_t k = std::min(config_.top_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                    [](const Candidate& l, const Candidate& r) {
                      return l.sim > r.sim || (l.sim == r.sim && l.entity < r.entity);
                    });
  const double base = has_mean_[a] ? mean_[a] : global_mean_;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const Candidate& nb = candidates[c];
    num += nb.sim * (nb.value - mean_[nb.entity]);
    den += nb.sim;
  }
  return den > 0.0 ? base + num / den : base;
}

std::vector<double> NeighborModel::predict(std::span<const data::Triplet> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(predict(p.user, p.service));
  return out;
}

// ---------------------------------------------------------------------------

double uipcc(double upcc, double ipcc, double weight) { return weight * upcc + (1.0 - weight) * ipcc; }

UipccModel::UipccModel(std::size_t users, std::size_t services, std::span<const data::Triplet> train,
                       NeighborConfig config, double weight)
    : upcc_(Side::kUser, users, services, train, config),
      ipcc_(Side::kService, users, services, train, config),
      weight_(weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw std::invalid_argument("UIPCC: weight outside [0, 1]");
}

double UipccModel::predict(std::size_t user, std::size_t service) const {
  return uipcc(upcc_.predict(user, service), ipcc_.predict(user, service), weight_);
}

std::vector<double> UipccModel::predict(std::span<const data::Triplet> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(predict(p.user, p.service));
  return out;
}

// ---------------------------------------------------------------------------

FactorModel::FactorModel(FactorVariant variant, std::size_t users, std::size_t services, FactorConfig config,
                         std::uint64_t seed)
    : variant_(variant), config_(config), seed_(seed) {
  if (config_.factors < 1) throw std::invalid_argument("FactorModel: factors must be at least 1");
  if (!(config_.lr > 0.0) || !(config_.reg >= 0.0)) throw std::invalid_argument("FactorModel: invalid lr / reg");
  const auto m = static_cast<Eigen::Index>(users);
  const auto n = static_cast<Eigen::Index>(services);
  const auto f = static_cast<Eigen::Index>(config_.factors);
  p_ = Eigen::MatrixXd::Zero(m, f);
  q_ = Eigen::MatrixXd::Zero(n, f);
  bu_ = Eigen::VectorXd::Zero(m);
  bs_ = Eigen::VectorXd::Zero(n);
  if (config_.learn_factors) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, config_.init_std);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index k = 0; k < f; ++k) p_(i, k) = normal(rng);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < f; ++k) q_(j, k) = normal(rng);
  }
}

double FactorModel::predict(std::size_t user, std::size_t service) const {
  check_index(user, service, static_cast<std::size_t>(p_.rows()), static_cast<std::size_t>(q_.rows()));
  const auto i = static_cast<Eigen::Index>(user);
  const auto j = static_cast<Eigen::Index>(service);
  double r = p_.row(i).dot(q_.row(j));
  if (variant_ == FactorVariant::kBiasMf) r += mu_ + bu_(i) + bs_(j);
  return r;
}

std::vector<double> FactorModel::predict(std::span<const data::Triplet> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(predict(p.user, p.service));
  return out;
}

void FactorModel::epoch(std::span<const data::Triplet> train, std::vector<std::size_t>& order) {
  const double lr = config_.lr;
  const double reg = config_.reg;
  const bool bias = variant_ == FactorVariant::kBiasMf;
  for (auto idx : order) {
    const auto& t = train[idx];
    const auto i = static_cast<Eigen::Index>(t.user);
    const auto j = static_cast<Eigen::Index>(t.service);
    const double err = predict(t.user, t.service) - t.value;
    if (config_.learn_factors) {
      const Eigen::RowVectorXd pi = p_.row(i);
      p_.row(i) -= lr * (err * q_.row(j) + reg * pi);
      q_.row(j) -= lr * (err * pi + reg * q_.row(j));
    }
    if (bias) {
      bu_(i) -= lr * (err + reg * bu_(i));
      bs_(j) -= lr * (err + reg * bs_(j));
    }
  }
}

FactorFitLog FactorModel::fit(std::span<const data::Triplet> train, std::span<const data::Triplet> val) {
  if (train.empty()) throw std::invalid_argument("FactorModel::fit: empty training set");
  for (const auto& t : train) {
    check_index(t.user, t.service, static_cast<std::size_t>(p_.rows()), static_cast<std::size_t>(q_.rows()));
  }
  mu_ = 0.0;
  if (variant_ == FactorVariant::kBiasMf) {
    for (const auto& t : train) mu_ += t.value;
    mu_ /= static_cast<double>(train.size());
  }
  std::mt19937_64 rng(seed_ ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FactorFitLog log;
  log.best_val_mae = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_p = p_, best_q = q_;
  Eigen::VectorXd best_bu = bu_, best_bs = bs_;
  std::size_t since = 0;
  for (std::size_t e = 1; e <= config_.max_epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch(train, order);
    log.epochs = e;

    double loss = 0.0;
    for (const auto& t : train) {
      const double err = predict(t.user, t.service) - t.value;
      loss += err * err;
    }
    loss += config_.reg * (p_.squaredNorm() + q_.squaredNorm() + bu_.squaredNorm() + bs_.squaredNorm());
    if (!std::isfinite(loss) || loss > config_.divergence_limit) {
      std::ostringstream msg;
      msg << "factor model diverged at epoch " << e << " (loss " << loss << "); lower the learning rate (lr="
          << config_.lr << ")";
      throw std::runtime_error(msg.str());
    }
    if (val.empty()) continue;
    double mae = 0.0;
    for (const auto& t : val) mae += std::abs(std::clamp(predict(t.user, t.service), 0.0, 1.0) - t.value);
    mae /= static_cast<double>(val.size());
    if (mae < log.best_val_mae) {
      log.best_val_mae = mae;
      log.best_epoch = e;
      best_p = p_;
      best_q = q_;
      best_bu = bu_;
      best_bs = bs_;
      since = 0;
    } else if (++since >= config_.patience) {
      break;
    }
  }
  if (!val.empty()) {
    p_ = best_p;
    q_ = best_q;
    bu_ = best_bu;
    bs_ = best_bs;
  } else {
    log.best_epoch = log.epochs;
  }
  double sq = 0.0;
  for (const auto& t : train) {
    const double err = predict(t.user, t.service) - t.value;
    sq += err * err;
  }
  log.train_rmse = std::sqrt(sq / static_cast<double>(train.size()));
  return log;
}

}  // namespace qosdiff::baselines
