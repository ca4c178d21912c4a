#pragma once

// The QoSDiff model, its composite objectives and the alternating 1:1
// discriminator / generator optimization loop with early stopping.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "qosdiff/aaim.hpp"
#include "qosdiff/data.hpp"
#include "qosdiff/delm.hpp"
#include "qosdiff/eval.hpp"
#include "qosdiff/optim.hpp"

namespace qosdiff::train {

using ad::Matrix;
using ad::Var;

struct ModelConfig {
  Eigen::Index dim = 256;
  int heads = 1;
  Eigen::Index hidden = 128;
  Eigen::Index ffn = 128;
  Eigen::Index out = 64;
  Eigen::Index disc_hidden = 64;
  double tau = 0.5;
  double gamma = 1.0;
  double leaky_slope = 0.2;
  double keep_probability = 0.7;

  delm::DelmConfig delm() const { return {dim, heads}; }
  aaim::AaimConfig aaim() const;
};

class QoSDiffModel : public eval::Predictor {
 public:
  QoSDiffModel(const data::QoSDataset& ds, const ModelConfig& config, std::uint64_t seed);
  QoSDiffModel(const QoSDiffModel&) = delete;
  QoSDiffModel& operator=(const QoSDiffModel&) = delete;

  /// Algorithm-2 forward pass for a batch of pairs. `train_generator` and
  /// `train_discriminator` choose which side records gradients.
  aaim::ForwardOutputs forward(ad::Graph& graph, nn::Mode mode, nn::Rng* rng, std::span<const std::size_t> users,
                               std::span<const std::size_t> services, bool train_generator, bool train_discriminator);

  /// Evaluation-mode predictions in (0, 1).
  std::vector<double> predict(std::span<const data::Triplet> pairs) override;

  /// Generator-side parameters (DELM + generator).
  ad::ParameterList generator_parameters();
  ad::ParameterList discriminator_parameters();
  nn::StateList state();

  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  nn::Rng init_rng_;  // must precede the networks it initializes

 public:
  delm::EmbeddingBank bank;
  aaim::Generator generator;
  aaim::Discriminator discriminator;
};

// ---------------------------------------------------------------------------
// Losses

/// -[y log s(x) + (1-y) log(1-s(x))] with s(x) clamped to [1e-7, 1-1e-7].
double bce(double x, double y);
double mse(double x, double y);

struct GeneratorLoss {
  Var total;        // (1 - lambda) * adversarial + lambda * regression
  Var regression;   // mean MSE(y_real, y)
  Var adversarial;  // mean BCE(d_real, 1)
};

GeneratorLoss generator_loss(const aaim::ForwardOutputs& outputs, const Matrix& targets, double lambda);
/// mean over the batch of BCE(d_real, 1) + BCE(d_fake, 0).
Var discriminator_loss(const aaim::ForwardOutputs& outputs);

struct GeneratorLossValues {
  double total = 0.0;
  double regression = 0.0;
  double adversarial = 0.0;
};

// ---------------------------------------------------------------------------

struct LossConfig {
  double lambda = 0.2;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 150;
  std::size_t patience = 15;
  ad::AdamWConfig generator_optimizer;
  ad::AdamWConfig discriminator_optimizer;

  void validate() const;
};

/// Validation-MAE early stopping. `update` returns true when training should stop.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  bool update(double metric);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  std::size_t since_improvement() const { return since_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_ = 0;
  bool improved_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_g = 0.0;
  double loss_reg = 0.0;
  double loss_adv_g = 0.0;
  double loss_d = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_improvement = 0;
  std::vector<Matrix> best_checkpoint;
  std::vector<EpochLog> log;
  std::size_t discriminator_steps = 0;
  std::size_t generator_steps = 0;
};

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

/// Drives the alternating optimization of a QoSDiffModel on a normalized dataset.
class Trainer {
 public:
  using Validator = std::function<eval::Metrics(QoSDiffModel&)>;

  Trainer(QoSDiffModel& model, const data::QoSDataset& ds, const data::Split& split, LossConfig config,
          std::uint64_t seed);

  /// One pass over the shuffled training indices: per mini-batch a
  /// discriminator step followed by a generator step.
  void train_epoch(TrainState& state);

  /// Trains until max_epochs or until validation MAE has not improved for
  /// `patience` consecutive epochs; leaves the model at its best checkpoint.
  TrainState fit();

  /// Minimizes L_D over the discriminator only.
  double discriminator_step(std::span<const std::size_t> batch);
  /// Minimizes L_G over DELM + generator only.
  GeneratorLossValues generator_step(std::span<const std::size_t> batch);

  /// Replaces the default validator (raw-scale metrics on the clean validation
  /// set, or on the training set when the split has no validation entries).
  void set_validator(Validator v) { validator_ = std::move(v); }

  /// Mini-batches for one epoch. A trailing batch of one row is merged into the
  /// previous batch since batch statistics need two rows.
  std::vector<std::vector<std::size_t>> make_batches();

  const LossConfig& config() const { return config_; }

 private:
  QoSDiffModel& model_;
  const data::QoSDataset& ds_;
  const data::Split& split_;
  LossConfig config_;
  nn::Rng rng_;
  ad::AdamW gen_opt_;
  ad::AdamW disc_opt_;
  Validator validator_;

  struct Batch {
    std::vector<std::size_t> users;
    std::vector<std::size_t> services;
    Matrix targets;
  };
  Batch gather(std::span<const std::size_t> batch) const;
  aaim::ForwardOutputs forward(ad::Graph& graph, const Batch& b, bool generator_side);
};

}  // namespace qosdiff::train
