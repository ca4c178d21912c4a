#include "qosdiff/aaim.hpp"

#include <stdexcept>
#include <string>

namespace qosdiff::aaim {

namespace {

constexpr double kGeneratorNormEps = 1e-5;

template <typename F>
Var stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::domain_error& err) {
    throw std::domain_error(std::string("generator stage '") + name + "': " + err.what());
  }
}

}  // namespace

InteractionBatch build_real_batch(const Var& user_rows, const Var& service_rows,
                                  std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  if (user_rows.rows() != service_rows.rows()) {
    throw ad::ShapeError("build_real_batch: " + std::to_string(user_rows.rows()) + " user rows vs " +
                         std::to_string(service_rows.rows()) + " service rows");
  }
  if (user_rows.rows() < 1) throw ad::ShapeError("build_real_batch: empty batch");
  if (!pairs.empty() && pairs.size() != static_cast<std::size_t>(user_rows.rows())) {
    throw std::invalid_argument("build_real_batch: pair list length differs from batch size");
  }
  return {ad::concat_cols({user_rows, service_rows}), Branch::kReal, std::move(pairs)};
}

Matrix sample_fake(Eigen::Index batch, Eigen::Index dim, double tau, Rng& rng) {
  if (!(tau >= 0.0)) throw std::invalid_argument("sample_fake: tau must be non-negative");
  Matrix f = nn::gaussian(batch, 2 * dim, 1.0, rng);
  if (tau > 0.0) f += tau * nn::uniform(batch, 2 * dim, 1.0, rng);
  return f;
}

Matrix sample_fake(Eigen::Index batch, Eigen::Index dim, double tau, std::uint64_t seed) {
  Rng rng(seed);
  return sample_fake(batch, dim, tau, rng);
}

// ---------------------------------------------------------------------------

Generator::Generator(const AaimConfig& c, Rng& rng)
    : proj_user_to_service("gen.w1", 2 * c.dim, c.hidden, rng),
      proj_service_to_user("gen.w2", 2 * c.dim, c.hidden, rng),
      attn_user_to_service("gen.attn_us", c.hidden, c.heads, rng),
      attn_service_to_user("gen.attn_su", c.hidden, c.heads, rng),
      ffn1("gen.w3", 2 * c.hidden, c.ffn, rng),
      norm1("gen.ln1", c.ffn, kGeneratorNormEps),
      ffn2("gen.w4", c.ffn, c.out, rng),
      norm2("gen.ln2", c.out, kGeneratorNormEps),
      head("gen.w5", c.out, 1, rng) {}

Var Generator::forward(const Context& ctx, const Var& t) {
  Var h_us = stage("projection U->S", [&] { return ad::relu(proj_user_to_service.forward(ctx, t)); });
  Var h_su = stage("projection S->U", [&] { return ad::relu(proj_service_to_user.forward(ctx, t)); });
  // Each row is a one-step sequence: query = key = own branch, value = other branch.
  Var a_us = stage("attention U->S", [&] { return attn_user_to_service.forward(ctx, h_us, h_us, h_su, 1); });
  Var a_su = stage("attention S->U", [&] { return attn_service_to_user.forward(ctx, h_su, h_su, h_us, 1); });
  Var g = ad::concat_cols({a_us, a_su});
  Var g1 = stage("feed-forward 1", [&] { return norm1.forward(ctx, ad::relu(ffn1.forward(ctx, g))); });
  Var g2 = stage("feed-forward 2", [&] { return norm2.forward(ctx, ad::relu(ffn2.forward(ctx, g1))); });
  return stage("output", [&] { return ad::sigmoid(head.forward(ctx, g2)); });
}

void Generator::collect(ad::ParameterList& out) {
  proj_user_to_service.collect(out);
  proj_service_to_user.collect(out);
  attn_user_to_service.collect(out);
  attn_service_to_user.collect(out);
  ffn1.collect(out);
  norm1.collect(out);
  ffn2.collect(out);
  norm2.collect(out);
  head.collect(out);
}

void Generator::collect_state(nn::StateList& out) {
  proj_user_to_service.collect_state(out);
  proj_service_to_user.collect_state(out);
  attn_user_to_service.collect_state(out);
  attn_service_to_user.collect_state(out);
  ffn1.collect_state(out);
  norm1.collect_state(out);
  ffn2.collect_state(out);
  norm2.collect_state(out);
  head.collect_state(out);
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const AaimConfig& c, Rng& rng)
    : hidden1("disc.w1", 1, c.disc_hidden, rng),
      norm1("disc.bn1", c.disc_hidden),
      hidden2("disc.w2", c.disc_hidden, c.disc_hidden, rng),
      norm2("disc.bn2", c.disc_hidden),
      dropout(c.keep_probability),
      output("disc.w3", c.disc_hidden, 1, rng),
      gamma_(c.gamma),
      slope_(c.leaky_slope) {
  if (!(gamma_ > 0.0)) throw std::invalid_argument("Discriminator: gamma must be positive");
}

Var Discriminator::forward(const Context& ctx, const Var& scores) {
  if (scores.cols() != 1) throw ad::ShapeError("Discriminator: expected B x 1 scores");
  Var h1 = ad::leaky_relu(hidden1.forward(ctx, scores), slope_);
  h1 = dropout.forward(ctx, norm1.forward(ctx, h1));
  Var h2 = ad::leaky_relu(hidden2.forward(ctx, h1), slope_);
  h2 = dropout.forward(ctx, norm2.forward(ctx, h2));
  return ad::scale(ad::sigmoid(output.forward(ctx, h2)), gamma_);
}

void Discriminator::collect(ad::ParameterList& out) {
  hidden1.collect(out);
  norm1.collect(out);
  hidden2.collect(out);
  norm2.collect(out);
  output.collect(out);
}

void Discriminator::collect_state(nn::StateList& out) {
  hidden1.collect_state(out);
  norm1.collect_state(out);
  hidden2.collect_state(out);
  norm2.collect_state(out);
  output.collect_state(out);
}

// ---------------------------------------------------------------------------

ForwardOutputs aaim_forward(Generator& generator, Discriminator& discriminator, const Context& gen_ctx,
                            const Context& disc_ctx, const InteractionBatch& real, const Matrix& fake) {
  if (&gen_ctx.graph != &disc_ctx.graph) throw std::logic_error("aaim_forward: contexts must share one graph");
  if (real.matrix.cols() != fake.cols()) {
    throw ad::ShapeError("aaim_forward: real width " + std::to_string(real.matrix.cols()) + " vs fake width " +
                         std::to_string(fake.cols()));
  }
  ForwardOutputs out;
  out.y_real = generator.forward(gen_ctx, real.matrix);
  out.y_fake = generator.forward(gen_ctx, gen_ctx.graph.constant(fake));
  out.d_real = discriminator.forward(disc_ctx, out.y_real);
  out.d_fake = discriminator.forward(disc_ctx, out.y_fake);
  return out;
}

}  // namespace qosdiff::aaim
