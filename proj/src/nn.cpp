#include "qosdiff/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace qosdiff::nn {

Rng& Context::require_rng() const {
  if (rng == nullptr) throw std::logic_error("training-mode forward pass requires a random generator");
  return *rng;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng, Init init, double variance) {
  Matrix w;
  Matrix b = Matrix::Zero(1, out);
  switch (init) {
    case Init::kUniformFanIn: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      w = uniform(out, in, bound, rng);
      b = uniform(1, out, bound, rng);
      break;
    }
    case Init::kXavier:
      w = uniform(out, in, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
      break;
    case Init::kGaussian:
      if (!(variance > 0.0)) throw std::invalid_argument("Linear: Gaussian init needs a positive variance");
      w = gaussian(out, in, std::sqrt(variance), rng);
      break;
  }
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", std::move(b));
}

Var Linear::forward(const Context& ctx, const Var& x) {
  return ad::linear(x, ctx.graph.param(weight, ctx.trainable), ctx.graph.param(bias, ctx.trainable));
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::collect_state(StateList& out) {
  out.push_back({weight.name, &weight.value});
  out.push_back({bias.name, &bias.value});
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(std::string name, Eigen::Index dim, double eps_)
    : gain(name + ".gain", Matrix::Ones(1, dim)), bias(name + ".bias", Matrix::Zero(1, dim)), eps(eps_) {}

Var LayerNorm::forward(const Context& ctx, const Var& x) {
  return ad::layer_norm(x, ctx.graph.param(gain, ctx.trainable), ctx.graph.param(bias, ctx.trainable), eps);
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

void LayerNorm::collect_state(StateList& out) {
  out.push_back({gain.name, &gain.value});
  out.push_back({bias.name, &bias.value});
}

// ---------------------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::string name, Eigen::Index dim, double momentum_, double eps_)
    : gain(name + ".gain", Matrix::Ones(1, dim)),
      bias(name + ".bias", Matrix::Zero(1, dim)),
      running_mean(Matrix::Zero(1, dim)),
      running_var(Matrix::Ones(1, dim)),
      momentum(momentum_),
      eps(eps_),
      name_(std::move(name)) {}

Var BatchNorm1d::forward(const Context& ctx, const Var& x) {
  Var g = ctx.graph.param(gain, ctx.trainable);
  Var b = ctx.graph.param(bias, ctx.trainable);
  if (!ctx.training()) {
    return ad::batch_norm_eval(x, g, b, running_mean.row(0), running_var.row(0), eps);
  }
  ad::BatchNormStats stats;
  Var out = ad::batch_norm_train(x, g, b, eps, &stats);
  const double n = static_cast<double>(x.rows());
  running_mean = (1.0 - momentum) * running_mean + momentum * stats.mean;
  running_var = (1.0 - momentum) * running_var + momentum * (stats.var * (n / (n - 1.0)));
  return out;
}

void BatchNorm1d::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

void BatchNorm1d::collect_state(StateList& out) {
  out.push_back({gain.name, &gain.value});
  out.push_back({bias.name, &bias.value});
  out.push_back({name_ + ".running_mean", &running_mean});
  out.push_back({name_ + ".running_var", &running_var});
}

// ---------------------------------------------------------------------------

Dropout::Dropout(double keep_probability) : keep_(keep_probability) {
  if (!(keep_ > 0.0 && keep_ <= 1.0)) throw std::invalid_argument("Dropout: keep probability must be in (0, 1]");
}

Var Dropout::forward(const Context& ctx, const Var& x) const {
  if (!ctx.training() || keep_ == 1.0) return x;
  std::bernoulli_distribution keep(keep_);
  Rng& rng = ctx.require_rng();
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / keep_ : 0.0;
  return ad::mul_constant(x, mask);
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::string name, Eigen::Index dim, int heads, Rng& rng, Init init,
                                       double variance)
    : q_proj(name + ".q_proj", dim, dim, rng, init, variance),
      k_proj(name + ".k_proj", dim, dim, rng, init, variance),
      v_proj(name + ".v_proj", dim, dim, rng, init, variance),
      out_proj(name + ".out_proj", dim, dim, rng, init, variance),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument(name + ": dimension " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

Var MultiHeadAttention::forward(const Context& ctx, const Var& query, const Var& key, const Var& value,
                                Eigen::Index seq_len) {
  Var q = q_proj.forward(ctx, query);
  Var k = k_proj.forward(ctx, key);
  Var v = v_proj.forward(ctx, value);
  return out_proj.forward(ctx, ad::attention(q, k, v, heads_, seq_len));
}

void MultiHeadAttention::collect(ParameterList& out) {
  q_proj.collect(out);
  k_proj.collect(out);
  v_proj.collect(out);
  out_proj.collect(out);
}

void MultiHeadAttention::collect_state(StateList& out) {
  q_proj.collect_state(out);
  k_proj.collect_state(out);
  v_proj.collect_state(out);
  out_proj.collect_state(out);
}

}  // namespace qosdiff::nn
