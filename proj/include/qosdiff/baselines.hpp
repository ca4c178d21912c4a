#pragma once

// Classical reference predictors: neighborhood CF (UPCC, IPCC, UIPCC) and
// latent-factor models (PMF, BiasMF).

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "qosdiff/data.hpp"
#include "qosdiff/eval.hpp"

namespace qosdiff::baselines {

/// Pearson coefficient over the co-observed entries of two partially observed
/// vectors (NaN marks unobserved). 0 when fewer than two entries are
/// co-observed or either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

enum class Side { kUser, kService };

struct NeighborConfig {
  std::size_t top_k = 10;
};

/// UPCC (Side::kUser) or IPCC (Side::kService) over a set of training triplets.
class NeighborModel : public eval::Predictor {
 public:
  NeighborModel(Side side, std::size_t users, std::size_t services, std::span<const data::Triplet> train,
                NeighborConfig config = {});

  double predict(std::size_t user, std::size_t service) const;
  std::vector<double> predict(std::span<const data::Triplet> pairs) override;

  double similarity(std::size_t a, std::size_t b) const { return sim_(a, b); }
  double entity_mean(std::size_t a) const { return mean_[a]; }
  std::size_t entities() const { return mean_.size(); }

 private:
  Side side_;
  NeighborConfig config_;
  std::size_t items_ = 0;
  double global_mean_ = 0.0;
  Eigen::MatrixXd sim_;
  std::vector<double> mean_;
  std::vector<bool> has_mean_;
  std::vector<std::vector<std::pair<std::size_t, double>>> observers_;  // per item: (entity, value)
};

/// w * UPCC + (1 - w) * IPCC.
class UipccModel : public eval::Predictor {
 public:
  UipccModel(std::size_t users, std::size_t services, std::span<const data::Triplet> train, NeighborConfig config = {},
             double weight = 0.5);

  double predict(std::size_t user, std::size_t service) const;
  std::vector<double> predict(std::span<const data::Triplet> pairs) override;

  const NeighborModel& user_model() const { return upcc_; }
  const NeighborModel& service_model() const { return ipcc_; }

 private:
  NeighborModel upcc_;
  NeighborModel ipcc_;
  double weight_;
};

double uipcc(double upcc, double ipcc, double weight);

enum class FactorVariant { kPmf, kBiasMf };

struct FactorConfig {
  std::size_t factors = 10;
  double reg = 0.01;
  double lr = 0.01;
  double init_std = 0.1;
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  bool learn_factors = true;  // false keeps p, q at zero (bias-only ablation)
  double divergence_limit = 1e6;
};

struct FactorFitLog {
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  double train_rmse = 0.0;
};

class FactorModel : public eval::Predictor {
 public:
  FactorModel(FactorVariant variant, std::size_t users, std::size_t services, FactorConfig config, std::uint64_t seed);

  /// SGD on sum (r_hat - y)^2 + reg * ||params||^2 over `train`; keeps the
  /// parameters with the best validation MAE when `val` is nonempty.
  FactorFitLog fit(std::span<const data::Triplet> train, std::span<const data::Triplet> val);

  double predict(std::size_t user, std::size_t service) const;
  std::vector<double> predict(std::span<const data::Triplet> pairs) override;

  FactorVariant variant() const { return variant_; }
  double global_mean() const { return mu_; }
  const Eigen::MatrixXd& user_factors() const { return p_; }
  const Eigen::MatrixXd& service_factors() const { return q_; }
  const Eigen::VectorXd& user_bias() const { return bu_; }
  const Eigen::VectorXd& service_bias() const { return bs_; }

 private:
  void epoch(std::span<const data::Triplet> train, std::vector<std::size_t>& order);

  FactorVariant variant_;
  FactorConfig config_;
  std::uint64_t seed_;
  double mu_ = 0.0;
  Eigen::MatrixXd p_;
  Eigen::MatrixXd q_;
  Eigen::VectorXd bu_;
  Eigen::VectorXd bs_;
};

}  // namespace qosdiff::baselines
