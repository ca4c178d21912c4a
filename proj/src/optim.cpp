#include "qosdiff/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace qosdiff::ad {

AdamW::AdamW(ParameterList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (Parameter* p : params_) {
    if (p == nullptr) throw std::invalid_argument("AdamW: null parameter");
    first_moment_.push_back(Matrix::Zero(p->rows(), p->cols()));
    second_moment_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void AdamW::step() {
  for (const Parameter* p : params_) {
    if (!p->has_grad) throw std::logic_error("AdamW: parameter '" + p->name + "' has no gradient");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Matrix& m = first_moment_[i];
    Matrix& v = second_moment_[i];
    m = config_.beta1 * m + (1.0 - config_.beta1) * p.grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value *= decay;
    p.value.array() -= config_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
    p.zero_grad();
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace qosdiff::ad
