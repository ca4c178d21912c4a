#include "qosdiff/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qosdiff::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '(' << m.rows() << 'x' << m.cols() << ')';
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

}  // namespace

Parameter::Parameter(std::string n, Matrix init)
    : name(std::move(n)), value(std::move(init)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  } else {
    grad.setZero();
  }
  has_grad = false;
}

// ---------------------------------------------------------------------------

const Matrix& Var::value() const { return graph_->nodes_[id_].value; }
const Matrix& Var::grad() const { return graph_->nodes_[id_].grad; }
bool Var::requires_grad() const { return graph_->nodes_[id_].requires_grad; }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item: expected a 1x1 value, got " + shape_str(v));
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.is_leaf = true;
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p, bool trainable) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.is_leaf = true;
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.graph() != this) throw std::logic_error("record: input belongs to another graph");
    needs = needs || in.requires_grad();
  }
  if (!value.allFinite()) throw std::domain_error("non-finite value produced by a primitive");
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) {
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) n.inputs.push_back(in.id());
    n.backward = std::move(backward);
  }
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(const Var& loss) {
  if (loss.graph_ != this) throw std::logic_error("backward: loss belongs to another graph");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.value()));
  }
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) throw std::logic_error("backward: loss does not depend on any differentiable input");

  for (Node& n : nodes_) {
    if (!n.is_leaf || n.param != nullptr) n.grad.resize(0, 0);
  }
  if (root.grad.size() == 0) root.grad = Matrix::Zero(1, 1);
  root.grad(0, 0) += 1.0;

  std::vector<Matrix*> input_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.is_leaf) {
      if (n.param != nullptr) {
        if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
          n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
        }
        n.param->grad += n.grad;
        n.param->has_grad = true;
      }
      continue;
    }
    input_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.size() == 0) src.grad = Matrix::Zero(src.value.rows(), src.value.cols());
      input_grads.push_back(&src.grad);
    }
    n.backward(n.grad, input_grads);
  }
}

void Graph::clear() { nodes_.clear(); }

// ---------------------------------------------------------------------------

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double clamped_bce(double x, double target) {
  const double s = std::clamp(sigmoid(x), kBceClamp, 1.0 - kBceClamp);
  return -(target * std::log(s) + (1.0 - target) * std::log(1.0 - s));
}

Var matmul(const Var& a, const Var& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) shape_fail("matmul", A, B);
  Matrix out(A.rows(), B.cols());
  out.noalias() = A * B;
  return a.graph().record(std::move(out), {a, b}, [pa = &A, pb = &B](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) grads[0]->noalias() += g * pb->transpose();
    if (grads[1]) grads[1]->noalias() += pa->transpose() * g;
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Matrix& X = x.value();
  const Matrix& W = weight.value();
  const Matrix& b = bias.value();
  if (X.cols() != W.cols()) shape_fail("linear", X, W);
  if (b.rows() != 1 || b.cols() != W.rows()) shape_fail("linear(bias)", W, b);
  Matrix out(X.rows(), W.rows());
  out.noalias() = X * W.transpose();
  out.rowwise() += b.row(0);
  return x.graph().record(std::move(out), {x, weight, bias},
                          [px = &X, pw = &W](const Matrix& g, std::span<Matrix* const> grads) {
                            if (grads[0]) grads[0]->noalias() += g * (*pw);
                            if (grads[1]) grads[1]->noalias() += g.transpose() * (*px);
                            if (grads[2]) *grads[2] += g.colwise().sum();
                          });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return a.graph().record(std::move(out), {a}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g.transpose();
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value() + b.value();
  return a.graph().record(std::move(out), {a, b}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g;
    if (grads[1]) *grads[1] += g;
  });
}

Var add_row(const Var& a, const Var& row) {
  const Matrix& A = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != A.cols()) shape_fail("add_row", A, r);
  Matrix out = A;
  out.rowwise() += r.row(0);
  return a.graph().record(std::move(out), {a, row}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g;
    if (grads[1]) *grads[1] += g.colwise().sum();
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value() - b.value();
  return a.graph().record(std::move(out), {a, b}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g;
    if (grads[1]) *grads[1] -= g;
  });
}

Var mul(const Var& a, const Var& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require_same_shape("mul", A, B);
  Matrix out = A.cwiseProduct(B);
  return a.graph().record(std::move(out), {a, b}, [pa = &A, pb = &B](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g.cwiseProduct(*pb);
    if (grads[1]) *grads[1] += g.cwiseProduct(*pa);
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return a.graph().record(std::move(out), {a}, [s](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.graph().record(std::move(out), {a}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g;
  });
}

Var mul_constant(const Var& a, const Matrix& mask) {
  require_same_shape("mul_constant", a.value(), mask);
  Matrix out = a.value().cwiseProduct(mask);
  return a.graph().record(std::move(out), {a}, [mask](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g.cwiseProduct(mask);
  });
}

Var relu(const Var& a) {
  const Matrix& A = a.value();
  Matrix out = A.cwiseMax(0.0);
  return a.graph().record(std::move(out), {a}, [pa = &A](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += (pa->array() > 0.0).select(g, 0.0);
  });
}

Var leaky_relu(const Var& a, double negative_slope) {
  const Matrix& A = a.value();
  Matrix out = (A.array() > 0.0).select(A, A * negative_slope);
  return a.graph().record(std::move(out), {a}, [pa = &A, negative_slope](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += (pa->array() > 0.0).select(g, g * negative_slope);
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  Matrix saved = out;
  return a.graph().record(std::move(out), {a}, [s = std::move(saved)](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  });
}

Var square(const Var& a) {
  const Matrix& A = a.value();
  Matrix out = A.cwiseAbs2();
  return a.graph().record(std::move(out), {a}, [pa = &A](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += 2.0 * g.cwiseProduct(*pa);
  });
}

Var softmax(const Var& a) {
  const Matrix& A = a.value();
  Matrix out(A.rows(), A.cols());
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const double mx = A.row(r).maxCoeff();
    out.row(r) = (A.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  Matrix saved = out;
  return a.graph().record(std::move(out), {a}, [s = std::move(saved)](const Matrix& g, std::span<Matrix* const> grads) {
    if (!grads[0]) return;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double dot = g.row(r).dot(s.row(r));
      grads[0]->row(r) += s.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Matrix& X = x.value();
  const Matrix& G = gain.value();
  const Matrix& B = bias.value();
  const Eigen::Index c = X.cols();
  if (G.rows() != 1 || G.cols() != c) shape_fail("layer_norm(gain)", X, G);
  if (B.rows() != 1 || B.cols() != c) shape_fail("layer_norm(bias)", X, B);
  Matrix xhat(X.rows(), c);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const auto centered = (X.row(r).array() - mu).eval();
    const double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), pg = &G](const Matrix& g, std::span<Matrix* const> grads) {
        if (grads[1]) *grads[1] += g.cwiseProduct(xhat).colwise().sum();
        if (grads[2]) *grads[2] += g.colwise().sum();
        if (!grads[0]) return;
        const Matrix dxhat = g.array().rowwise() * pg->row(0).array();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
          grads[0]->row(r) += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
        }
      });
}

Var batch_norm_train(const Var& x, const Var& gain, const Var& bias, double eps, BatchNormStats* batch_stats) {
  const Matrix& X = x.value();
  const Matrix& G = gain.value();
  const Matrix& B = bias.value();
  const Eigen::Index n = X.rows();
  const Eigen::Index c = X.cols();
  if (n < 2) throw ShapeError("batch_norm: batch statistics undefined for a batch of size " + std::to_string(n));
  if (G.rows() != 1 || G.cols() != c) shape_fail("batch_norm(gain)", X, G);
  if (B.rows() != 1 || B.cols() != c) shape_fail("batch_norm(bias)", X, B);
  const RowVector mu = X.colwise().mean();
  const Matrix centered = X.rowwise() - mu;
  const RowVector var = centered.cwiseAbs2().colwise().mean();
  const RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  if (batch_stats != nullptr) {
    batch_stats->mean = mu;
    batch_stats->var = var;
  }
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std, pg = &G](const Matrix& g, std::span<Matrix* const> grads) {
        if (grads[1]) *grads[1] += g.cwiseProduct(xhat).colwise().sum();
        if (grads[2]) *grads[2] += g.colwise().sum();
        if (!grads[0]) return;
        const Matrix dxhat = g.array().rowwise() * pg->row(0).array();
        const RowVector m1 = dxhat.colwise().mean();
        const RowVector m2 = dxhat.cwiseProduct(xhat).colwise().mean();
        Matrix dx = dxhat.rowwise() - m1;
        dx -= (xhat.array().rowwise() * m2.array()).matrix();
        *grads[0] += (dx.array().rowwise() * inv_std.array()).matrix();
      });
}

Var batch_norm_eval(const Var& x, const Var& gain, const Var& bias, const RowVector& running_mean,
                    const RowVector& running_var, double eps) {
  const Matrix& X = x.value();
  const Matrix& G = gain.value();
  const Matrix& B = bias.value();
  const Eigen::Index c = X.cols();
  if (running_mean.cols() != c || running_var.cols() != c || G.cols() != c || B.cols() != c) {
    shape_fail("batch_norm_eval", X, G);
  }
  const RowVector inv_std = (running_var.array() + eps).rsqrt().matrix();
  Matrix xhat = (X.rowwise() - running_mean).array().rowwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  return x.graph().record(std::move(out), {x, gain, bias},
                          [xhat = std::move(xhat), inv_std, pg = &G](const Matrix& g, std::span<Matrix* const> grads) {
                            if (grads[1]) *grads[1] += g.cwiseProduct(xhat).colwise().sum();
                            if (grads[2]) *grads[2] += g.colwise().sum();
                            if (grads[0]) {
                              *grads[0] += (g.array().rowwise() * (pg->row(0).array() * inv_std.array())).matrix();
                            }
                          });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    widths.push_back(p.cols());
    at += p.cols();
  }
  return parts.front().graph().record(std::move(out), parts,
                                      [widths = std::move(widths)](const Matrix& g, std::span<Matrix* const> grads) {
                                        Eigen::Index off = 0;
                                        for (std::size_t i = 0; i < widths.size(); ++i) {
                                          if (grads[i]) *grads[i] += g.middleCols(off, widths[i]);
                                          off += widths[i];
                                        }
                                      });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(A));
  }
  Matrix out = A.middleCols(begin, count);
  return a.graph().record(std::move(out), {a}, [begin, count](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) grads[0]->middleCols(begin, count) += g;
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> rows) {
  const Matrix& T = table.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), T.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= static_cast<std::size_t>(T.rows())) {
      throw std::out_of_range("gather_rows: index " + std::to_string(rows[r]) + " out of range for table with " +
                              std::to_string(T.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(r)) = T.row(static_cast<Eigen::Index>(rows[r]));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return table.graph().record(std::move(out), {table}, [idx = std::move(idx)](const Matrix& g, std::span<Matrix* const> grads) {
    if (!grads[0]) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      grads[0]->row(static_cast<Eigen::Index>(idx[r])) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph().record(std::move(out), {a}, [](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) grads[0]->array() += g(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty input");
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.graph().record(std::move(out), {a}, [n](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) grads[0]->array() += g(0, 0) / n;
  });
}

Var mse_loss(const Var& pred, const Matrix& target) {
  require_same_shape("mse_loss", pred.value(), target);
  const double n = static_cast<double>(target.size());
  if (n == 0) throw ShapeError("mse_loss: empty input");
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return pred.graph().record(std::move(out), {pred}, [diff = std::move(diff), n](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += diff * (2.0 * g(0, 0) / n);
  });
}

Var bce_with_sigmoid_loss(const Var& x, const Matrix& target) {
  require_same_shape("bce_with_sigmoid_loss", x.value(), target);
  const Matrix& X = x.value();
  const double n = static_cast<double>(target.size());
  if (n == 0) throw ShapeError("bce_with_sigmoid_loss: empty input");
  double total = 0.0;
  Matrix dx(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double s = sigmoid(X.data()[i]);
    const double y = target.data()[i];
    total += clamped_bce(X.data()[i], y);
    // Clamped region has zero slope.
    const bool clamped = s < kBceClamp || s > 1.0 - kBceClamp;
    dx.data()[i] = clamped ? 0.0 : (s - y) / n;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return x.graph().record(std::move(out), {x}, [dx = std::move(dx)](const Matrix& g, std::span<Matrix* const> grads) {
    if (grads[0]) *grads[0] += dx * g(0, 0);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, Eigen::Index seq_len) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  require_same_shape("attention(q,k)", Q, K);
  require_same_shape("attention(q,v)", Q, V);
  if (heads < 1 || Q.cols() % heads != 0) {
    throw ShapeError("attention: model dim " + std::to_string(Q.cols()) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (seq_len < 1 || Q.rows() % seq_len != 0) {
    throw ShapeError("attention: " + std::to_string(Q.rows()) + " rows is not a whole number of sequences of length " +
                     std::to_string(seq_len));
  }
  const Eigen::Index n_seq = Q.rows() / seq_len;
  const Eigen::Index hd = Q.cols() / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix out = Matrix::Zero(Q.rows(), Q.cols());
  // weights[s*heads + h] is the seq_len x seq_len attention matrix.
  std::vector<Matrix> weights(static_cast<std::size_t>(n_seq * heads));
  for (Eigen::Index s = 0; s < n_seq; ++s) {
    for (int h = 0; h < heads; ++h) {
      const auto qb = Q.block(s * seq_len, h * hd, seq_len, hd);
      const auto kb = K.block(s * seq_len, h * hd, seq_len, hd);
      const auto vb = V.block(s * seq_len, h * hd, seq_len, hd);
      Matrix scores = (qb * kb.transpose()) * scl;
      for (Eigen::Index r = 0; r < seq_len; ++r) {
        const double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      out.block(s * seq_len, h * hd, seq_len, hd).noalias() = scores * vb;
      weights[static_cast<std::size_t>(s * heads + h)] = std::move(scores);
    }
  }
  return q.graph().record(
      std::move(out), {q, k, v},
      [weights = std::move(weights), pq = &Q, pk = &K, pv = &V, heads, seq_len, n_seq, hd, scl](
          const Matrix& g, std::span<Matrix* const> grads) {
        for (Eigen::Index s = 0; s < n_seq; ++s) {
          for (int h = 0; h < heads; ++h) {
            const Matrix& A = weights[static_cast<std::size_t>(s * heads + h)];
            const auto gb = g.block(s * seq_len, h * hd, seq_len, hd);
            const auto qb = pq->block(s * seq_len, h * hd, seq_len, hd);
            const auto kb = pk->block(s * seq_len, h * hd, seq_len, hd);
            const auto vb = pv->block(s * seq_len, h * hd, seq_len, hd);
            if (grads[2]) grads[2]->block(s * seq_len, h * hd, seq_len, hd).noalias() += A.transpose() * gb;
            if (!grads[0] && !grads[1]) continue;
            const Matrix dA = gb * vb.transpose();
            Matrix dS(seq_len, seq_len);
            for (Eigen::Index r = 0; r < seq_len; ++r) {
              const double dot = dA.row(r).dot(A.row(r));
              dS.row(r) = A.row(r).cwiseProduct((dA.row(r).array() - dot).matrix());
            }
            dS *= scl;
            if (grads[0]) grads[0]->block(s * seq_len, h * hd, seq_len, hd).noalias() += dS * kb;
            if (grads[1]) grads[1]->block(s * seq_len, h * hd, seq_len, hd).noalias() += dS.transpose() * qb;
          }
        }
      });
}

}  // namespace qosdiff::ad
