#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "qosdiff/baselines.hpp"

using namespace qosdiff;
using baselines::Side;
using data::Triplet;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Triplet> dense(const std::vector<std::vector<double>>& m) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) {
      if (!std::isnan(m[i][j])) out.push_back({i, j, m[i][j]});
    }
  }
  return out;
}

std::vector<Triplet> random_sparse(std::size_t users, std::size_t services, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(p);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < users; ++i) {
    for (std::size_t j = 0; j < services; ++j) {
      if (keep(rng)) out.push_back({i, j, val(rng)});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pearson examples") {
  const std::vector<double> a{1, 2, 3}, b{3, 2, 1};
  CHECK(baselines::pearson(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(baselines::pearson(a, b) == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<double> c{1, kNaN, kNaN}, d{2, 5, kNaN};
  CHECK(baselines::pearson(c, d) == 0.0);
  const std::vector<double> flat{2, 2, 2};
  CHECK(baselines::pearson(a, flat) == 0.0);
  // only co-observed entries count
  const std::vector<double> e{1, kNaN, 3, 4}, f{2, 9, 6, 8};
  CHECK(baselines::pearson(e, f) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("UPCC on the 2x2 instance falls back to the user mean") {
  const auto train = dense({{1, 2}, {1, kNaN}});
  baselines::NeighborModel upcc(Side::kUser, 2, 2, train, {1});
  CHECK(upcc.similarity(0, 1) == 0.0);
  CHECK(upcc.predict(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("UPCC with identical rows (brute-force oracle)") {
  // user 0 misses column 2; its own mean 1.5, neighbours' mean 2, offset +1 at column 2
  const auto train = dense({{1, 2, kNaN}, {1, 2, 3}, {1, 2, 3}});
  baselines::NeighborModel upcc(Side::kUser, 3, 3, train, {2});
  CHECK(upcc.similarity(0, 1) == doctest::Approx(1.0));
  CHECK(upcc.predict(0, 2) == doctest::Approx(2.5).epsilon(1e-12));
  // same rows observed in full: each neighbour reproduces the observed column offset
  const auto full = dense({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  baselines::NeighborModel upcc_full(Side::kUser, 3, 3, full, {2});
  for (std::size_t j = 0; j < 3; ++j) CHECK(upcc_full.predict(0, j) == doctest::Approx(1.0 + j).epsilon(1e-12));
}

TEST_CASE("neighbour fallbacks") {
  // user 2 has no observations: global mean; nobody else observed column 1: own mean
  const auto train = dense({{0.2, kNaN}, {0.4, kNaN}, {kNaN, kNaN}});
  baselines::NeighborModel upcc(Side::kUser, 3, 2, train, {});
  CHECK(upcc.predict(2, 0) == doctest::Approx(0.3));
  CHECK(upcc.predict(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("IPCC mirrors UPCC on the transposed matrix") {
  const auto t = random_sparse(9, 7, 0.6, 3);
  std::vector<Triplet> transposed;
  for (const auto& x : t) transposed.push_back({x.service, x.user, x.value});
  baselines::NeighborModel ipcc(Side::kService, 9, 7, t, {3});
  baselines::NeighborModel upcc_t(Side::kUser, 7, 9, transposed, {3});
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 7; ++j) CHECK(ipcc.predict(i, j) == doctest::Approx(upcc_t.predict(j, i)).epsilon(1e-12));
  }
}

TEST_CASE("similarity: symmetric, bounded, unit diagonal") {
  const auto t = random_sparse(40, 30, 0.3, 5);
  baselines::NeighborModel m(Side::kUser, 40, 30, t, {});
  for (std::size_t a = 0; a < 40; ++a) {
    for (std::size_t b = 0; b < 40; ++b) {
      CHECK(m.similarity(a, b) == m.similarity(b, a));
      CHECK(m.similarity(a, b) >= -1.0);
      CHECK(m.similarity(a, b) <= 1.0);
    }
  }
  const auto d = dense({{0.1, 0.5, 0.3}, {0.2, 0.1, kNaN}});
  baselines::NeighborModel m2(Side::kUser, 2, 3, d, {});
  CHECK(m2.similarity(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("similarity matches pearson on dense vectors") {
  const auto t = random_sparse(6, 12, 0.7, 8);
  baselines::NeighborModel m(Side::kUser, 6, 12, t, {});
  std::vector<std::vector<double>> rows(6, std::vector<double>(12, kNaN));
  for (const auto& x : t) rows[x.user][x.service] = x.value;
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      if (a == b) continue;
      CHECK(m.similarity(a, b) == doctest::Approx(baselines::pearson(rows[a], rows[b])).epsilon(1e-9));
    }
  }
}

TEST_CASE("UIPCC: affine mixture of UPCC and IPCC") {
  const auto t = random_sparse(3, 3, 0.8, 12);
  baselines::UipccModel u1(3, 3, t, {}, 1.0);
  baselines::UipccModel u0(3, 3, t, {}, 0.0);
  baselines::UipccModel half(3, 3, t, {}, 0.5);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double up = u1.user_model().predict(i, j);
      const double ip = u1.service_model().predict(i, j);
      CHECK(u1.predict(i, j) == up);
      CHECK(u0.predict(i, j) == ip);
      CHECK(half.predict(i, j) == doctest::Approx(0.5 * (up + ip)).epsilon(1e-15));
    }
  }
  CHECK(baselines::uipcc(0.2, 0.6, 0.25) == doctest::Approx(0.5));
}

TEST_CASE("neighbour models are deterministic") {
  const auto t = random_sparse(20, 15, 0.4, 2);
  baselines::NeighborModel a(Side::kUser, 20, 15, t, {});
  baselines::NeighborModel b(Side::kUser, 20, 15, t, {});
  std::vector<Triplet> q;
  for (std::size_t i = 0; i < 20; ++i) q.push_back({i, i % 15, 0.0});
  CHECK(a.predict(q) == b.predict(q));
}

TEST_CASE("PMF recovers a planted rank-1 matrix") {
  const std::vector<double> u{0.4, 0.8, 1.1}, v{0.5, 0.9, 0.3};
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) t.push_back({i, j, u[i] * v[j]});
  }
  baselines::FactorConfig cfg;
  cfg.factors = 1;
  cfg.reg = 0.0;
  cfg.lr = 0.05;
  cfg.init_std = 0.5;
  cfg.max_epochs = 2000;
  baselines::FactorModel pmf(baselines::FactorVariant::kPmf, 3, 3, cfg, 1);
  const auto log = pmf.fit(t, {});
  INFO("train RMSE " << log.train_rmse);
  CHECK(log.train_rmse < 1e-2);
}

TEST_CASE("BiasMF with frozen factors is mu + b_i + b_j") {
  const auto t = random_sparse(8, 6, 0.7, 4);
  baselines::FactorConfig cfg;
  cfg.learn_factors = false;
  cfg.max_epochs = 50;
  baselines::FactorModel m(baselines::FactorVariant::kBiasMf, 8, 6, cfg, 3);
  m.fit(t, {});
  CHECK(m.user_factors().isZero(0.0));
  CHECK(m.service_factors().isZero(0.0));
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double expect = m.global_mean() + m.user_bias()(static_cast<Eigen::Index>(i)) +
                            m.service_bias()(static_cast<Eigen::Index>(j));
      CHECK(m.predict(i, j) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("heavy regularization drives factors to zero") {
  const auto t = random_sparse(8, 6, 0.7, 6);
  baselines::FactorConfig cfg;
  cfg.reg = 20.0;
  cfg.lr = 0.02;
  cfg.max_epochs = 200;
  for (auto variant : {baselines::FactorVariant::kPmf, baselines::FactorVariant::kBiasMf}) {
    baselines::FactorModel m(variant, 8, 6, cfg, 2);
    m.fit(t, {});
    CHECK(m.user_factors().cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.service_factors().cwiseAbs().maxCoeff() < 1e-6);
    if (variant == baselines::FactorVariant::kPmf) {
      CHECK(std::abs(m.predict(1, 1)) < 1e-9);
    } else {
      // biases are shrunk too; each sits near -residual / reg with residuals in [-1, 1]
      CHECK(m.user_bias().cwiseAbs().maxCoeff() <= 1.0 / cfg.reg);
      CHECK(m.service_bias().cwiseAbs().maxCoeff() <= 1.0 / cfg.reg);
      CHECK(std::abs(m.predict(1, 1) - m.global_mean()) <= 2.0 / cfg.reg);
    }
  }
}

TEST_CASE("factor models: divergence hint, determinism, validation restore") {
  const auto t = random_sparse(10, 10, 0.5, 9);
  baselines::FactorConfig wild;
  wild.lr = 50.0;
  baselines::FactorModel bad(baselines::FactorVariant::kPmf, 10, 10, wild, 1);
  CHECK_THROWS_WITH(bad.fit(t, {}), doctest::Contains("lower the learning rate"));

  const std::vector<Triplet> train(t.begin(), t.begin() + 35);
  const std::vector<Triplet> val(t.begin() + 35, t.end());
  baselines::FactorModel a(baselines::FactorVariant::kBiasMf, 10, 10, {}, 5);
  baselines::FactorModel b(baselines::FactorVariant::kBiasMf, 10, 10, {}, 5);
  const auto la = a.fit(train, val);
  b.fit(train, val);
  CHECK(a.predict(val) == b.predict(val));
  double mae = 0.0;
  for (const auto& x : val) mae += std::abs(std::clamp(a.predict(x.user, x.service), 0.0, 1.0) - x.value);
  CHECK(mae / static_cast<double>(val.size()) == doctest::Approx(la.best_val_mae).epsilon(1e-12));
  CHECK_THROWS(a.fit({}, {}));
}
