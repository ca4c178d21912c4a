#include "qosdiff/delm.hpp"

#include <cmath>
#include <stdexcept>

namespace qosdiff::delm {

namespace {

// Refined vectors must come out with unit variance to well below 1e-6, so the
// aggregation norm uses a negligible epsilon.
constexpr double kAggregateNormEps = 1e-12;

}  // namespace

DiffusionSchedule DiffusionSchedule::for_dimension(Eigen::Index dim) {
  if (dim <= 2) {
    throw std::invalid_argument("schedule degenerate: alpha1 <= 0 for embedding dimension " + std::to_string(dim));
  }
  DiffusionSchedule s;
  s.dim = dim;
  s.beta1 = 2.0 / static_cast<double>(dim);
  s.alpha1 = 1.0 - s.beta1;
  return s;
}

Matrix kaiming_init(Eigen::Index rows, Eigen::Index dim, Rng& rng) {
  const DiffusionSchedule s = DiffusionSchedule::for_dimension(dim);
  return nn::gaussian(rows, dim, std::sqrt(s.beta1), rng);
}

Matrix kaiming_init(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed);
  return kaiming_init(rows, dim, rng);
}

// ---------------------------------------------------------------------------

DenoiserNet::DenoiserNet(const std::string& name, Eigen::Index dim, int heads, Rng& rng)
    : attention(name + ".attn", dim, heads, rng, nn::Init::kGaussian, 2.0 / static_cast<double>(dim)),
      projection(name + ".proj", dim, dim, rng, nn::Init::kGaussian, 2.0 / static_cast<double>(dim)) {}

Var DenoiserNet::predict_noise(const Context& ctx, const Var& e) {
  return projection.forward(ctx, attention.forward(ctx, e, e, e, 1));
}

void DenoiserNet::collect(ad::ParameterList& out) {
  attention.collect(out);
  projection.collect(out);
}

void DenoiserNet::collect_state(nn::StateList& out) {
  attention.collect_state(out);
  projection.collect_state(out);
}

Var single_step_reconstruct(const Context& ctx, const Var& e, DenoiserNet& net, const DiffusionSchedule& sched,
                            const Matrix* z, const std::string& label) {
  if (!(sched.alpha1 > 0.0)) throw std::invalid_argument("single_step_reconstruct: alpha1 must be positive");
  try {
    const double sqrt_beta = std::sqrt(sched.beta1);
    Var eps_hat = net.predict_noise(ctx, e);
    Var out = ad::scale(ad::sub(e, ad::scale(eps_hat, sqrt_beta)), 1.0 / std::sqrt(sched.alpha1));
    if (z != nullptr) out = ad::add(out, ctx.graph.constant(*z * sqrt_beta));
    return out;
  } catch (const std::domain_error& err) {
    throw std::domain_error("non-finite refined embedding in table '" + label + "': " + err.what());
  }
}

// ---------------------------------------------------------------------------

EmbeddingBank::Table::Table(const std::string& table_name, Eigen::Index rows, Eigen::Index dim, int heads, Rng& rng)
    : name(table_name), weights(table_name, kaiming_init(rows, dim, rng)), denoiser(table_name + ".denoiser", dim, heads, rng) {}

EmbeddingBank::EmbeddingBank(std::size_t users, std::size_t services, const std::vector<std::size_t>& user_vocab_sizes,
                             const std::vector<std::size_t>& service_vocab_sizes,
                             std::vector<std::vector<std::size_t>> user_context,
                             std::vector<std::vector<std::size_t>> service_context, DelmConfig config,
                             std::uint64_t seed)
    : config_(config),
      schedule_(DiffusionSchedule::for_dimension(config.dim)),
      user_context_(std::move(user_context)),
      service_context_(std::move(service_context)),
      user_norm_("delm.user_norm", config.dim, kAggregateNormEps),
      service_norm_("delm.service_norm", config.dim, kAggregateNormEps) {
  if (user_context_.size() != users || service_context_.size() != services) {
    throw std::invalid_argument("EmbeddingBank: context rows must match entity counts");
  }
  Rng rng(seed);
  const auto d = config.dim;
  user_tables_.push_back(std::make_unique<Table>("delm.user_id", static_cast<Eigen::Index>(users), d, config.heads, rng));
  for (std::size_t k = 0; k < user_vocab_sizes.size(); ++k) {
    user_tables_.push_back(std::make_unique<Table>("delm.user_attr" + std::to_string(k),
                                                   static_cast<Eigen::Index>(user_vocab_sizes[k]), d, config.heads, rng));
  }
  service_tables_.push_back(
      std::make_unique<Table>("delm.service_id", static_cast<Eigen::Index>(services), d, config.heads, rng));
  for (std::size_t k = 0; k < service_vocab_sizes.size(); ++k) {
    service_tables_.push_back(std::make_unique<Table>("delm.service_attr" + std::to_string(k),
                                                      static_cast<Eigen::Index>(service_vocab_sizes[k]), d,
                                                      config.heads, rng));
  }
  for (const auto& row : user_context_) {
    if (row.size() != user_vocab_sizes.size()) throw std::invalid_argument("EmbeddingBank: user context width mismatch");
  }
  for (const auto& row : service_context_) {
    if (row.size() != service_vocab_sizes.size()) {
      throw std::invalid_argument("EmbeddingBank: service context width mismatch");
    }
  }
}

Var EmbeddingBank::refine(const Context& ctx, std::span<const std::size_t> ids,
                          std::vector<std::unique_ptr<Table>>& tables,
                          const std::vector<std::vector<std::size_t>>& context, nn::LayerNorm& norm) {
  if (ids.empty()) throw std::invalid_argument("EmbeddingBank: empty index list");
  for (auto id : ids) {
    if (id >= context.size()) {
      throw std::out_of_range("EmbeddingBank: entity " + std::to_string(id) + " out of range (" +
                              std::to_string(context.size()) + " known)");
    }
  }
  const auto batch = static_cast<Eigen::Index>(ids.size());
  std::vector<std::size_t> rows(ids.size());
  Var total;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    Table& table = *tables[t];
    for (std::size_t b = 0; b < ids.size(); ++b) rows[b] = t == 0 ? ids[b] : context[ids[b]][t - 1];
    Var e = ad::gather_rows(ctx.graph.param(table.weights, ctx.trainable), rows);
    Var refined;
    if (ctx.training()) {
      const Matrix z = nn::gaussian(batch, config_.dim, 1.0, ctx.require_rng());
      refined = single_step_reconstruct(ctx, e, table.denoiser, schedule_, &z, table.name);
    } else {
      refined = single_step_reconstruct(ctx, e, table.denoiser, schedule_, nullptr, table.name);
    }
    total = total.valid() ? ad::add(total, refined) : refined;
  }
  return norm.forward(ctx, total);
}

Var EmbeddingBank::refine_users(const Context& ctx, std::span<const std::size_t> users) {
  return refine(ctx, users, user_tables_, user_context_, user_norm_);
}

Var EmbeddingBank::refine_services(const Context& ctx, std::span<const std::size_t> services) {
  return refine(ctx, services, service_tables_, service_context_, service_norm_);
}

Matrix EmbeddingBank::refine_all(std::vector<std::unique_ptr<Table>>& tables,
                                 const std::vector<std::vector<std::size_t>>& context, nn::LayerNorm& norm) {
  // Each table is refined once; entities then pick their rows. In evaluation
  // mode refinement is row-wise deterministic, so this equals refine().
  ad::Graph graph;
  const Context ctx{graph, nn::Mode::kEval, nullptr, false};
  const auto n = static_cast<Eigen::Index>(context.size());
  Matrix total = Matrix::Zero(n, config_.dim);
  for (std::size_t t = 0; t < tables.size(); ++t) {
    Table& table = *tables[t];
    Var refined = single_step_reconstruct(ctx, graph.constant(table.weights.value), table.denoiser, schedule_, nullptr,
                                          table.name);
    const Matrix& rows = refined.value();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = t == 0 ? i : static_cast<Eigen::Index>(context[static_cast<std::size_t>(i)][t - 1]);
      total.row(i) += rows.row(r);
    }
    graph.clear();
  }
  return norm.forward(ctx, graph.constant(std::move(total))).value();
}

Matrix EmbeddingBank::refine_all_users() { return refine_all(user_tables_, user_context_, user_norm_); }
Matrix EmbeddingBank::refine_all_services() { return refine_all(service_tables_, service_context_, service_norm_); }

void EmbeddingBank::collect(ad::ParameterList& out) {
  for (auto* tables : {&user_tables_, &service_tables_}) {
    for (auto& t : *tables) {
      out.push_back(&t->weights);
      t->denoiser.collect(out);
    }
  }
  user_norm_.collect(out);
  service_norm_.collect(out);
}

void EmbeddingBank::collect_state(nn::StateList& out) {
  for (auto* tables : {&user_tables_, &service_tables_}) {
    for (auto& t : *tables) {
      out.push_back({t->weights.name, &t->weights.value});
      t->denoiser.collect_state(out);
    }
  }
  user_norm_.collect_state(out);
  service_norm_.collect_state(out);
}

}  // namespace qosdiff::delm
