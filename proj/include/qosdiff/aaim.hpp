#pragma once

// Adversarial attention-based interaction module: real / fake interaction
// batches, the bidirectional hybrid attention generator, the scalar
// discriminator and the four-output forward pass.

#include <cstdint>
#include <utility>
#include <vector>

#include "qosdiff/nn.hpp"

namespace qosdiff::aaim {

using ad::Matrix;
using ad::Var;
using nn::Context;
using nn::Rng;

struct AaimConfig {
  Eigen::Index dim = 256;          // d, width of each embedding half
  Eigen::Index hidden = 128;       // d_h
  Eigen::Index ffn = 128;          // d_g
  Eigen::Index out = 64;           // d_o
  Eigen::Index disc_hidden = 64;   // d_D
  int heads = 1;
  double tau = 0.5;
  double gamma = 1.0;
  double leaky_slope = 0.2;
  double keep_probability = 0.7;
};

enum class Branch { kReal, kFake };

struct InteractionBatch {
  Var matrix;  // B x 2d
  Branch branch = Branch::kReal;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // real branch only
};

/// Row b is user_rows[b] || service_rows[b].
InteractionBatch build_real_batch(const Var& user_rows, const Var& service_rows,
                                  std::vector<std::pair<std::size_t, std::size_t>> pairs = {});

/// F = N + tau * eps with N ~ N(0, 1) and eps ~ U(-1, 1), both B x 2d.
Matrix sample_fake(Eigen::Index batch, Eigen::Index dim, double tau, Rng& rng);
Matrix sample_fake(Eigen::Index batch, Eigen::Index dim, double tau, std::uint64_t seed);

class Generator {
 public:
  Generator(const AaimConfig& config, Rng& rng);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  /// B x 2d interactions to B x 1 predictions in (0, 1).
  Var forward(const Context& ctx, const Var& interactions);

  void collect(ad::ParameterList& out);
  void collect_state(nn::StateList& out);

  nn::Linear proj_user_to_service;  // W1, b1
  nn::Linear proj_service_to_user;  // W2, b2
  nn::MultiHeadAttention attn_user_to_service;
  nn::MultiHeadAttention attn_service_to_user;
  nn::Linear ffn1;  // W3, b3
  nn::LayerNorm norm1;
  nn::Linear ffn2;  // W4, b4
  nn::LayerNorm norm2;
  nn::Linear head;  // w5, b5
};

class Discriminator {
 public:
  Discriminator(const AaimConfig& config, Rng& rng);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// B x 1 scores to B x 1 credibilities in (0, gamma). Training mode needs
  /// B >= 2 for batch statistics.
  Var forward(const Context& ctx, const Var& scores);

  void collect(ad::ParameterList& out);
  void collect_state(nn::StateList& out);
  double gamma() const { return gamma_; }

  nn::Linear hidden1;
  nn::BatchNorm1d norm1;
  nn::Linear hidden2;
  nn::BatchNorm1d norm2;
  nn::Dropout dropout;
  nn::Linear output;

 private:
  double gamma_;
  double slope_;
};

struct ForwardOutputs {
  Var y_real;  // B x 1
  Var y_fake;
  Var d_real;
  Var d_fake;
};

/// y_r = G(T), y_f = G(F), d_r = D(y_r), d_f = D(y_f).
ForwardOutputs aaim_forward(Generator& generator, Discriminator& discriminator, const Context& gen_ctx,
                            const Context& disc_ctx, const InteractionBatch& real, const Matrix& fake);

}  // namespace qosdiff::aaim
