#pragma once

#include <cstdint>
#include <vector>

#include "qosdiff/autodiff.hpp"

namespace qosdiff::ad {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moment buffers are bound to the parameter
/// list given at construction; the list order must not change between steps.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config = {});

  /// Applies one update to every parameter and zeroes the gradients.
  /// Throws if any parameter has no gradient.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  std::int64_t step_ = 0;
};

}  // namespace qosdiff::ad
