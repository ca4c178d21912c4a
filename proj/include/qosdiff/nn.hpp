#pragma once

// Layer building blocks over the autodiff substrate.

#include <random>
#include <string>
#include <vector>

#include "qosdiff/autodiff.hpp"

namespace qosdiff::nn {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::ParameterList;
using ad::Var;

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

/// Everything a forward pass needs besides the inputs.
struct Context {
  Graph& graph;
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;      // required in training mode by stochastic layers
  bool trainable = true;   // false binds parameters as constants (frozen)

  bool training() const { return mode == Mode::kTrain; }
  Rng& require_rng() const;
};

/// A named tensor slot used by checkpoints. Parameters and buffers alike.
struct StateEntry {
  std::string name;
  Matrix* value;
};
using StateList = std::vector<StateEntry>;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

enum class Init {
  kUniformFanIn,  // U(-1/sqrt(in), 1/sqrt(in)) for weight and bias
  kXavier,        // Xavier-uniform weight, zero bias
  kGaussian,      // N(0, variance) weight, zero bias; variance supplied separately
};

class Linear {
 public:
  Linear(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng, Init init = Init::kUniformFanIn,
         double variance = 0.0);

  Var forward(const Context& ctx, const Var& x);
  void collect(ParameterList& out);
  void collect_state(StateList& out);

  Parameter weight;  // out x in
  Parameter bias;    // 1 x out
};

class LayerNorm {
 public:
  LayerNorm(std::string name, Eigen::Index dim, double eps);

  Var forward(const Context& ctx, const Var& x);
  void collect(ParameterList& out);
  void collect_state(StateList& out);

  Parameter gain;
  Parameter bias;
  double eps;
};

class BatchNorm1d {
 public:
  BatchNorm1d(std::string name, Eigen::Index dim, double momentum = 0.1, double eps = 1e-5);

  /// Training mode normalizes with batch statistics and updates the running
  /// estimates (unbiased variance); evaluation mode uses the running estimates.
  Var forward(const Context& ctx, const Var& x);
  void collect(ParameterList& out);
  void collect_state(StateList& out);

  Parameter gain;
  Parameter bias;
  Matrix running_mean;  // 1 x dim
  Matrix running_var;   // 1 x dim
  double momentum;
  double eps;

 private:
  std::string name_;
};

/// Inverted dropout: training scales kept units by 1/keep, evaluation is identity.
class Dropout {
 public:
  explicit Dropout(double keep_probability);
  Var forward(const Context& ctx, const Var& x) const;
  double keep_probability() const { return keep_; }

 private:
  double keep_;
};

/// Multi-head attention over independent sequences of length `seq_len`
/// stacked row-wise.
class MultiHeadAttention {
 public:
  MultiHeadAttention(std::string name, Eigen::Index dim, int heads, Rng& rng, Init init = Init::kXavier,
                     double variance = 0.0);

  Var forward(const Context& ctx, const Var& query, const Var& key, const Var& value, Eigen::Index seq_len = 1);
  void collect(ParameterList& out);
  void collect_state(StateList& out);
  int heads() const { return heads_; }

  Linear q_proj;
  Linear k_proj;
  Linear v_proj;
  Linear out_proj;

 private:
  int heads_;
};

}  // namespace qosdiff::nn
