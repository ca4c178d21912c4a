#include <doctest.h>

#include <cmath>
#include <string>

#include "gradient_suite.hpp"
#include "qosdiff/optim.hpp"

using namespace qosdiff;
using ad::Graph;
using ad::Matrix;
using ad::Parameter;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("matmul identity and relu definition") {
  Graph g;
  auto a = g.constant(mat({{1, 2}, {3, 4}}));
  auto i = g.constant(mat({{1, 0}, {0, 1}}));
  CHECK(ad::matmul(a, i).value() == mat({{1, 2}, {3, 4}}));
  auto r = ad::relu(g.constant(mat({{-1, 0, 2}})));
  CHECK(r.value() == mat({{0, 0, 2}}));
}

TEST_CASE("softmax over a singleton axis is exactly one") {
  Graph g;
  auto s = ad::softmax(g.constant(mat({{-3.7}, {0.0}, {1e6}})));
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(s.value()(i, 0) == 1.0);
}

TEST_CASE("shape mismatches raise descriptive errors") {
  Graph g;
  auto a = g.constant(Matrix::Ones(2, 3));
  auto b = g.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), ad::ShapeError);
  CHECK_THROWS_AS(ad::add(a, g.constant(Matrix::Ones(3, 2))), ad::ShapeError);
  CHECK_THROWS_AS(ad::add_row(a, g.constant(Matrix::Ones(1, 2))), ad::ShapeError);
  try {
    ad::matmul(a, b);
  } catch (const ad::ShapeError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("backward examples") {
  Parameter x("x", mat({{1, 2, 3}}));
  {
    Graph g;
    auto v = g.param(x);
    g.backward(ad::sum(ad::mul(v, v)));
  }
  CHECK(x.grad == mat({{2, 4, 6}}));

  // repeated backward without reset accumulates
  {
    Graph g;
    auto v = g.param(x);
    g.backward(ad::sum(ad::mul(v, v)));
  }
  CHECK(x.grad == mat({{4, 8, 12}}));

  Parameter z("z", mat({{0.0}}));
  {
    Graph g;
    g.backward(ad::bce_with_sigmoid_loss(g.param(z), mat({{1.0}})));
  }
  CHECK(z.grad(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Parameter x("x", mat({{1, 2}}));
  Graph g;
  auto v = g.param(x);
  CHECK_THROWS(g.backward(v));
}

TEST_CASE("frozen parameters receive no gradient") {
  Parameter x("x", mat({{1, 2}}));
  Parameter w("w", mat({{3, 4}}));
  Graph g;
  g.backward(ad::sum(ad::mul(g.param(x), g.param(w, false))));
  CHECK(x.has_grad);
  CHECK_FALSE(w.has_grad);
  CHECK(x.grad == mat({{3, 4}}));
}

TEST_CASE("scalar clamped BCE") {
  CHECK(ad::clamped_bce(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::isfinite(ad::clamped_bce(100.0, 0.0)));
  CHECK(ad::clamped_bce(100.0, 0.0) == doctest::Approx(-std::log(ad::kBceClamp)).epsilon(1e-9));
}

TEST_CASE("layer norm yields zero mean and unit variance") {
  std::mt19937_64 rng(3);
  Parameter gain("g", Matrix::Ones(1, 7));
  Parameter bias("b", Matrix::Zero(1, 7));
  Graph g;
  auto y = ad::layer_norm(g.constant(testing::random_matrix(5, 7, rng, 3.0)), g.param(gain), g.param(bias));
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto row = y.value().row(i);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("batch norm eval handles a single row") {
  Parameter gain("g", Matrix::Ones(1, 3));
  Parameter bias("b", Matrix::Zero(1, 3));
  ad::RowVector mean(3), var(3);
  mean << 0.1, -0.2, 0.3;
  var << 1.0, 2.0, 0.5;
  Graph g;
  auto y = ad::batch_norm_eval(g.constant(mat({{1, 2, 3}})), g.param(gain), g.param(bias), mean, var, 1e-5);
  CHECK(y.value().allFinite());
  CHECK(y.value()(0, 0) == doctest::Approx(0.9 / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("gradient suite: primitives") {
  for (const auto& c : testing::gradient_suite()) {
    const bool composite = c.name.find("::") != std::string::npos;
    if (composite) continue;
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 100; ++t) worst = std::max(worst, c.trial(1000 + t));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("singleton-softmax attention leaves query/key weights with zero gradient") {
  std::mt19937_64 rng(5);
  nn::MultiHeadAttention mha("m", 4, 2, rng);
  Parameter x("x", testing::random_matrix(3, 4, rng));
  Graph g;
  const nn::Context ctx{g, nn::Mode::kEval, nullptr, true};
  auto in = g.param(x);
  g.backward(ad::sum(ad::square(mha.forward(ctx, in, in, in, 1))));
  ad::ParameterList ps;
  mha.collect(ps);
  for (auto* p : ps) {
    INFO(p->name);
    REQUIRE(p->has_grad);
    const bool qk = p->name.find(".q_proj") != std::string::npos || p->name.find(".k_proj") != std::string::npos;
    if (qk) {
      CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
    } else {
      CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// AdamW

TEST_CASE("AdamW: zero gradient and zero decay leaves the parameter unchanged") {
  Parameter w("w", mat({{1.5, -2.0}}));
  ad::AdamW opt({&w}, {0.1, 0.0});
  w.grad = Matrix::Zero(1, 2);
  w.has_grad = true;
  opt.step();
  CHECK(w.value == mat({{1.5, -2.0}}));
  CHECK_FALSE(w.has_grad);
}

TEST_CASE("AdamW: first step moves against the gradient sign") {
  Parameter w("w", mat({{0.0, 0.0, 0.0}}));
  ad::AdamW opt({&w}, {0.01, 0.0});
  w.grad = mat({{0.3, -2.0, 1e-4}});
  w.has_grad = true;
  opt.step();
  CHECK(w.value(0, 0) < 0.0);
  CHECK(w.value(0, 1) > 0.0);
  CHECK(w.value(0, 2) < 0.0);
  // bias-corrected first step is lr * g / (|g| + eps')
  CHECK(w.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("AdamW: missing gradient is an error") {
  Parameter w("w", mat({{1.0}}));
  ad::AdamW opt({&w});
  CHECK_THROWS(opt.step());
}

TEST_CASE("AdamW: minimizes (w-3)^2 from 0 within 500 steps at lr 0.1") {
  Parameter w("w", mat({{0.0}}));
  ad::AdamW opt({&w}, {0.1, 0.0});
  int reached = -1;
  for (int step = 1; step <= 500; ++step) {
    {
      Graph g;
      g.backward(ad::sum(ad::square(ad::add_scalar(g.param(w), -3.0))));
    }
    opt.step();
    if (reached < 0 && std::abs(w.value(0, 0) - 3.0) < 1e-3) reached = step;
  }
  INFO("w = " << w.value(0, 0));
  CHECK(reached > 0);
  CHECK(std::abs(w.value(0, 0) - 3.0) < 1e-3);
  CHECK(opt.step_count() == 500);
}
