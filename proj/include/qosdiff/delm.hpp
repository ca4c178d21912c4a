#pragma once

// Diffusion-based embedding learning: Kaiming-calibrated embedding tables,
// one attention denoiser per table, single-step reconstruction and
// layer-normalized aggregation into user / service vectors.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qosdiff/nn.hpp"

namespace qosdiff::delm {

using ad::Matrix;
using ad::Var;
using nn::Context;
using nn::Rng;

/// Single-step noise schedule calibrated to Kaiming variance 2/d.
struct DiffusionSchedule {
  Eigen::Index dim = 0;
  double beta1 = 0.0;
  double alpha1 = 0.0;

  /// Throws std::invalid_argument for dim <= 2 (alpha1 <= 0).
  static DiffusionSchedule for_dimension(Eigen::Index dim);
};

/// rows x d table of i.i.d. N(0, 2/d) entries.
Matrix kaiming_init(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed);
Matrix kaiming_init(Eigen::Index rows, Eigen::Index dim, Rng& rng);

/// eps_theta(x) = Linear(MHA(x, x, x)) with every input row treated as its own
/// length-1 sequence.
class DenoiserNet {
 public:
  DenoiserNet(const std::string& name, Eigen::Index dim, int heads, Rng& rng);

  Var predict_noise(const Context& ctx, const Var& e);
  void collect(ad::ParameterList& out);
  void collect_state(nn::StateList& out);

  nn::MultiHeadAttention attention;
  nn::Linear projection;
};

/// e_hat = (e - sqrt(beta1) * eps_hat) / sqrt(alpha1) + sqrt(beta1) * z.
/// `z` may be null, meaning zero. `label` names the table in error messages.
Var single_step_reconstruct(const Context& ctx, const Var& e, DenoiserNet& net, const DiffusionSchedule& sched,
                            const Matrix* z, const std::string& label = "embedding");

struct DelmConfig {
  Eigen::Index dim = 256;
  int heads = 1;
};

/// Identity and attribute tables for users and services with their denoisers.
class EmbeddingBank {
 public:
  struct Table {
    Table(const std::string& name, Eigen::Index rows, Eigen::Index dim, int heads, Rng& rng);
    std::string name;
    ad::Parameter weights;
    DenoiserNet denoiser;
  };

  /// `user_context[i][k]` is user i's index into attribute table k (same for
  /// services). Table rows equal the vocabulary sizes.
  EmbeddingBank(std::size_t users, std::size_t services, const std::vector<std::size_t>& user_vocab_sizes,
                const std::vector<std::size_t>& service_vocab_sizes,
                std::vector<std::vector<std::size_t>> user_context,
                std::vector<std::vector<std::size_t>> service_context, DelmConfig config, std::uint64_t seed);

  EmbeddingBank(const EmbeddingBank&) = delete;
  EmbeddingBank& operator=(const EmbeddingBank&) = delete;

  /// B x d refined user vectors z^U for the given users. Training mode samples
  /// z ~ N(0, I) per component; evaluation mode uses z = 0.
  Var refine_users(const Context& ctx, std::span<const std::size_t> users);
  Var refine_services(const Context& ctx, std::span<const std::size_t> services);

  /// Evaluation-mode refinement of every user / service.
  Matrix refine_all_users();
  Matrix refine_all_services();

  void collect(ad::ParameterList& out);
  void collect_state(nn::StateList& out);

  const DiffusionSchedule& schedule() const { return schedule_; }
  const DelmConfig& config() const { return config_; }
  std::size_t user_count() const { return user_context_.size(); }
  std::size_t service_count() const { return service_context_.size(); }

  /// Index 0 is the identity table, 1..p the attribute tables.
  std::vector<std::unique_ptr<Table>>& user_tables() { return user_tables_; }
  std::vector<std::unique_ptr<Table>>& service_tables() { return service_tables_; }
  nn::LayerNorm& user_norm() { return user_norm_; }
  nn::LayerNorm& service_norm() { return service_norm_; }

 private:
  Var refine(const Context& ctx, std::span<const std::size_t> ids, std::vector<std::unique_ptr<Table>>& tables,
             const std::vector<std::vector<std::size_t>>& context, nn::LayerNorm& norm);
  Matrix refine_all(std::vector<std::unique_ptr<Table>>& tables, const std::vector<std::vector<std::size_t>>& context,
                    nn::LayerNorm& norm);

  DelmConfig config_;
  DiffusionSchedule schedule_;
  std::vector<std::vector<std::size_t>> user_context_;
  std::vector<std::vector<std::size_t>> service_context_;
  std::vector<std::unique_ptr<Table>> user_tables_;
  std::vector<std::unique_ptr<Table>> service_tables_;
  nn::LayerNorm user_norm_;
  nn::LayerNorm service_norm_;
};

}  // namespace qosdiff::delm
