#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Graph records every primitive applied to nodes that require gradients, in
// insertion order. Insertion order is a topological order, so backward() is a
// single reverse sweep. Persistent trainable state lives in Parameter objects;
// a graph only borrows them for the duration of one step.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace qosdiff::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Trainable tensor that outlives any single graph.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix init);

  std::string name;
  Matrix value;
  Matrix grad;
  bool has_grad = false;

  void zero_grad();
  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
};

using ParameterList = std::vector<Parameter*>;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid until the graph is cleared.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the output gradient and accumulates into the input gradients.
/// Entries of `input_grads` are null for inputs that do not require gradients.
using BackwardFn = std::function<void(const Matrix& out_grad, std::span<Matrix* const> input_grads)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Free leaf whose gradient is kept on the node (see Var::grad).
  Var leaf(Matrix value);
  /// Leaf bound to a Parameter. Backward accumulates into `p.grad` when trainable.
  Var param(Parameter& p, bool trainable = true);

  /// Records a primitive application. A node is created in every case, but the
  /// backward closure is kept only if some input requires gradients.
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  /// Populates gradients of every reachable leaf with d(loss)/d(leaf).
  /// Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Var& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. All are differentiable in every Var argument.

Var matmul(const Var& a, const Var& b);
/// x * W^T + 1 b^T with W stored as (out x in) and b as (1 x out).
Var linear(const Var& x, const Var& weight, const Var& bias);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
/// Adds a (1 x c) row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// Elementwise product with a constant mask (no gradient to the mask).
Var mul_constant(const Var& a, const Matrix& mask);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);
Var sigmoid(const Var& a);
Var square(const Var& a);

/// Row-wise softmax.
Var softmax(const Var& a);

/// Row-wise layer normalization with (1 x c) gain and bias. Uses the population
/// variance of each row.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-12);

/// Column-wise batch normalization over the rows of `x`.
/// Training mode normalizes with the batch mean and biased batch variance and
/// writes them to `batch_mean` / `batch_var` if non-null. Evaluation mode uses
/// `running_mean` / `running_var` as constants.
struct BatchNormStats {
  RowVector mean;
  RowVector var;
};
Var batch_norm_train(const Var& x, const Var& gain, const Var& bias, double eps,
                     BatchNormStats* batch_stats = nullptr);
Var batch_norm_eval(const Var& x, const Var& gain, const Var& bias, const RowVector& running_mean,
                    const RowVector& running_var, double eps);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
/// Row lookup; repeated indices accumulate gradient.
Var gather_rows(const Var& table, std::span<const std::size_t> rows);

Var sum(const Var& a);
Var mean(const Var& a);

/// Mean squared error between equally shaped matrices, as a 1x1 node.
Var mse_loss(const Var& pred, const Matrix& target);
/// Mean of -[y log s(x) + (1-y) log(1-s(x))] with s(x) clamped to [1e-7, 1-1e-7].
Var bce_with_sigmoid_loss(const Var& x, const Matrix& target);

/// Scaled dot-product attention over independent sequences.
/// q, k, v are (sequences*seq_len) x model_dim, sequence-major. Each of `heads`
/// heads attends over model_dim/heads columns within its own sequence.
Var attention(const Var& q, const Var& k, const Var& v, int heads, Eigen::Index seq_len);

inline constexpr double kBceClamp = 1e-7;

double sigmoid(double x);
double clamped_bce(double x, double target);

}  // namespace qosdiff::ad
