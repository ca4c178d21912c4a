#include "qosdiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qosdiff/checkpoint.hpp"

namespace qosdiff::train {

namespace {

constexpr Eigen::Index kPredictChunk = 4096;

std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename F>
auto named_term(const char* term, F&& f) {
  try {
    return f();
  } catch (const std::domain_error& err) {
    throw std::domain_error(std::string("non-finite ") + term + ": " + err.what());
  }
}

void require_finite(const char* term, double v) {
  if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite ") + term);
}

}  // namespace

aaim::AaimConfig ModelConfig::aaim() const {
  aaim::AaimConfig c;
  c.dim = dim;
  c.hidden = hidden;
  c.ffn = ffn;
  c.out = out;
  c.disc_hidden = disc_hidden;
  c.heads = heads;
  c.tau = tau;
  c.gamma = gamma;
  c.leaky_slope = leaky_slope;
  c.keep_probability = keep_probability;
  return c;
}

QoSDiffModel::QoSDiffModel(const data::QoSDataset& ds, const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      init_rng_(derive(seed, 1)),
      bank(ds.users, ds.services, ds.user_vocab_sizes, ds.service_vocab_sizes, ds.user_context, ds.service_context,
           config.delm(), derive(seed, 0)),
      generator(config.aaim(), init_rng_),
      discriminator(config.aaim(), init_rng_) {}

aaim::ForwardOutputs QoSDiffModel::forward(ad::Graph& graph, nn::Mode mode, nn::Rng* rng,
                                           std::span<const std::size_t> users, std::span<const std::size_t> services,
                                           bool train_generator, bool train_discriminator) {
  if (users.size() != services.size()) throw std::invalid_argument("QoSDiffModel: user / service lists differ");
  if (mode == nn::Mode::kTrain && rng == nullptr) throw std::invalid_argument("QoSDiffModel: training needs an rng");
  const nn::Context gen{graph, mode, rng, train_generator};
  const nn::Context disc{graph, mode, rng, train_discriminator};
  Var u = bank.refine_users(gen, users);
  Var s = bank.refine_services(gen, services);
  const auto real = aaim::build_real_batch(u, s);
  const auto batch = static_cast<Eigen::Index>(users.size());
  Matrix fake = rng != nullptr ? aaim::sample_fake(batch, config_.dim, config_.tau, *rng)
                               : aaim::sample_fake(batch, config_.dim, config_.tau, std::uint64_t{0});
  return aaim::aaim_forward(generator, discriminator, gen, disc, real, fake);
}

std::vector<double> QoSDiffModel::predict(std::span<const data::Triplet> pairs) {
  std::vector<double> out(pairs.size());
  if (pairs.empty()) return out;
  const Matrix users = bank.refine_all_users();
  const Matrix services = bank.refine_all_services();
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const Eigen::Index d = config_.dim;
  for (Eigen::Index begin = 0; begin < n; begin += kPredictChunk) {
    const Eigen::Index count = std::min(kPredictChunk, n - begin);
    Matrix t(count, 2 * d);
    for (Eigen::Index r = 0; r < count; ++r) {
      const auto& p = pairs[static_cast<std::size_t>(begin + r)];
      if (p.user >= bank.user_count() || p.service >= bank.service_count()) {
        throw std::out_of_range("QoSDiffModel::predict: pair (" + std::to_string(p.user) + ", " +
                                std::to_string(p.service) + ") outside the trained matrix");
      }
      t.row(r).head(d) = users.row(static_cast<Eigen::Index>(p.user));
      t.row(r).tail(d) = services.row(static_cast<Eigen::Index>(p.service));
    }
    ad::Graph graph;
    const nn::Context ctx{graph, nn::Mode::kEval, nullptr, false};
    const Matrix y = generator.forward(ctx, graph.constant(std::move(t))).value();
    for (Eigen::Index r = 0; r < count; ++r) out[static_cast<std::size_t>(begin + r)] = y(r, 0);
  }
  return out;
}

ad::ParameterList QoSDiffModel::generator_parameters() {
  ad::ParameterList out;
  bank.collect(out);
  generator.collect(out);
  return out;
}

ad::ParameterList QoSDiffModel::discriminator_parameters() {
  ad::ParameterList out;
  discriminator.collect(out);
  return out;
}

nn::StateList QoSDiffModel::state() {
  nn::StateList out;
  bank.collect_state(out);
  generator.collect_state(out);
  discriminator.collect_state(out);
  return out;
}

// ---------------------------------------------------------------------------

double bce(double x, double y) { return ad::clamped_bce(x, y); }

double mse(double x, double y) { return (x - y) * (x - y); }

GeneratorLoss generator_loss(const aaim::ForwardOutputs& outputs, const Matrix& targets, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("generator_loss: lambda outside [0, 1]");
  if (outputs.y_real.rows() != targets.rows() || outputs.y_real.cols() != targets.cols()) {
    throw ad::ShapeError("generator_loss: prediction / target shapes differ");
  }
  GeneratorLoss out;
  out.regression = named_term("L_reg", [&] { return ad::mse_loss(outputs.y_real, targets); });
  out.adversarial = named_term("L_adv_G", [&] {
    return ad::bce_with_sigmoid_loss(outputs.d_real, Matrix::Ones(outputs.d_real.rows(), 1));
  });
  out.total = named_term("L_G", [&] {
    return ad::add(ad::scale(out.adversarial, 1.0 - lambda), ad::scale(out.regression, lambda));
  });
  return out;
}

Var discriminator_loss(const aaim::ForwardOutputs& outputs) {
  if (outputs.d_real.rows() != outputs.d_fake.rows()) throw ad::ShapeError("discriminator_loss: branch sizes differ");
  return named_term("L_D", [&] {
    const Eigen::Index b = outputs.d_real.rows();
    Var real = ad::bce_with_sigmoid_loss(outputs.d_real, Matrix::Ones(b, 1));
    Var fake = ad::bce_with_sigmoid_loss(outputs.d_fake, Matrix::Zero(b, 1));
    return ad::add(real, fake);
  });
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw data::ConfigError("lambda must lie in [0, 1]");
  if (batch_size < 2) throw data::ConfigError("batch_size must be at least 2 (batch normalization)");
  if (max_epochs < 1) throw data::ConfigError("max_epochs must be at least 1");
  if (patience < 1 || patience > max_epochs) throw data::ConfigError("patience must lie in [1, max_epochs]");
  for (const auto* o : {&generator_optimizer, &discriminator_optimizer}) {
    if (!(o->lr > 0.0) || !(o->weight_decay >= 0.0) || !(o->beta1 >= 0.0 && o->beta1 < 1.0) ||
        !(o->beta2 >= 0.0 && o->beta2 < 1.0) || !(o->eps > 0.0)) {
      throw data::ConfigError("invalid optimizer settings");
    }
  }
}

bool EarlyStopping::update(double metric) {
  if (metric < best_) {
    best_ = metric;
    since_ = 0;
    improved_ = true;
  } else {
    ++since_;
    improved_ = false;
  }
  return since_ >= patience_;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,L_G,L_reg,L_adv_G,L_D,val_MAE,val_RMSE\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.loss_g, e.loss_reg,
                  e.loss_adv_g, e.loss_d, e.val_mae, e.val_rmse);
    os << buf;
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << os.str();
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

Trainer::Trainer(QoSDiffModel& model, const data::QoSDataset& ds, const data::Split& split, LossConfig config,
                 std::uint64_t seed)
    : model_(model),
      ds_(ds),
      split_(split),
      config_(config),
      rng_(derive(seed, 2)),
      gen_opt_(model.generator_parameters(), config.generator_optimizer),
      disc_opt_(model.discriminator_parameters(), config.discriminator_optimizer) {
  config_.validate();
  if (!ds.normalized) throw std::invalid_argument("Trainer: dataset must be normalized");
  if (split.train.empty()) throw std::invalid_argument("Trainer: empty training split");
  for (auto i : split.train) {
    if (i >= ds.triplets.size()) throw std::out_of_range("Trainer: split index outside the dataset");
  }
  validator_ = [this](QoSDiffModel& m) {
    const auto& idx = split_.val.empty() ? split_.train : split_.val;
    const auto rows = data::select(ds_, idx);
    return eval::evaluate(m, rows, ds_, eval::Scale::kRaw);
  };
}

std::vector<std::vector<std::size_t>> Trainer::make_batches() {
  std::vector<std::size_t> order = split_.train;
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  if (batches.size() == 1 && batches.front().size() < 2) {
    throw std::invalid_argument("Trainer: need at least two training triplets for batch statistics");
  }
  return batches;
}

Trainer::Batch Trainer::gather(std::span<const std::size_t> batch) const {
  Batch b;
  b.users.reserve(batch.size());
  b.services.reserve(batch.size());
  b.targets.resize(static_cast<Eigen::Index>(batch.size()), 1);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto& t = ds_.triplets[batch[r]];
    b.users.push_back(t.user);
    b.services.push_back(t.service);
    b.targets(static_cast<Eigen::Index>(r), 0) = t.value;
  }
  return b;
}

aaim::ForwardOutputs Trainer::forward(ad::Graph& graph, const Batch& b, bool generator_side) {
  return model_.forward(graph, nn::Mode::kTrain, &rng_, b.users, b.services, generator_side, !generator_side);
}

double Trainer::discriminator_step(std::span<const std::size_t> batch) {
  const Batch b = gather(batch);
  ad::Graph graph;
  const auto out = named_term("forward (discriminator phase)", [&] { return forward(graph, b, false); });
  Var loss = discriminator_loss(out);
  require_finite("L_D", loss.item());
  disc_opt_.zero_grad();
  graph.backward(loss);
  disc_opt_.step();
  return loss.item();
}

GeneratorLossValues Trainer::generator_step(std::span<const std::size_t> batch) {
  const Batch b = gather(batch);
  ad::Graph graph;
  const auto out = named_term("forward (generator phase)", [&] { return forward(graph, b, true); });
  const auto loss = generator_loss(out, b.targets, config_.lambda);
  require_finite("L_G", loss.total.item());
  gen_opt_.zero_grad();
  graph.backward(loss.total);
  gen_opt_.step();
  return {loss.total.item(), loss.regression.item(), loss.adversarial.item()};
}

void Trainer::train_epoch(TrainState& state) {
  const auto batches = make_batches();
  EpochLog log;
  log.epoch = state.epoch + 1;
  for (const auto& batch : batches) {
    log.loss_d += discriminator_step(batch);
    ++state.discriminator_steps;
    const auto g = generator_step(batch);
    ++state.generator_steps;
    log.loss_g += g.total;
    log.loss_reg += g.regression;
    log.loss_adv_g += g.adversarial;
  }
  const auto n = static_cast<double>(batches.size());
  log.loss_d /= n;
  log.loss_g /= n;
  log.loss_reg /= n;
  log.loss_adv_g /= n;
  const auto metrics = validator_(model_);
  log.val_mae = metrics.mae;
  log.val_rmse = metrics.rmse;
  state.epoch = log.epoch;
  state.log.push_back(log);
}

TrainState Trainer::fit() {
  TrainState state;
  EarlyStopping stopper(config_.patience);
  const auto slots = model_.state();
  while (state.epoch < config_.max_epochs) {
    train_epoch(state);
    const bool stop = stopper.update(state.log.back().val_mae);
    if (stopper.improved()) {
      state.best_val_mae = stopper.best();
      state.best_epoch = state.epoch;
      state.best_checkpoint = snapshot(slots);
    }
    state.since_improvement = stopper.since_improvement();
    if (stop) break;
  }
  if (!state.best_checkpoint.empty()) restore(slots, state.best_checkpoint);
  return state;
}

}  // namespace qosdiff::train
