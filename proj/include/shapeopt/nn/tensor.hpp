/// @file tensor.hpp
/// @brief Reverse-mode differentiation over dense row-major matrices.
///
/// A Tensor is a handle to a graph node holding a value, a gradient slot and
/// the closure that pushes its gradient to its inputs. Rows are batch
/// entries (or tokens of a batch of sequences), columns are features.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "shapeopt/core.hpp"

namespace shapeopt::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor variable(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Matrix& value() const { return node().value; }
  Matrix& value() { return node().value; }
  /// Gradient, zero-filled when nothing flowed into this node.
  Matrix grad() const {
    const auto& n = node();
    return n.grad.size() ? n.grad : Matrix::Zero(n.value.rows(), n.value.cols());
  }
  void zero_grad() { node().grad.resize(0, 0); }
  bool requires_grad() const { return node().requires_grad; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const {
    if (value().size() != 1) throw StructureError("item() on a tensor with " + std::to_string(value().size()) + " values");
    return value()(0, 0);
  }

  /// Propagates `seed` (dL/dthis) through the graph. A scalar tensor may omit it.
  void backward(const Matrix& seed) const;
  void backward() const {
    if (value().size() != 1) throw StructureError("backward() without a seed needs a scalar");
    backward(Matrix::Ones(1, 1));
  }

  const std::shared_ptr<Node>& ptr() const noexcept { return node_; }

  /// Result node of an operation on `inputs`.
  static Tensor make(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> bw) {
    Tensor t(std::move(value), false);
    for (const auto& in : inputs) {
      t.node_->requires_grad = t.node_->requires_grad || in.requires_grad();
      t.node_->parents.push_back(in.node_);
    }
    if (t.node_->requires_grad) t.node_->backward = std::move(bw);
    return t;
  }

 private:
  Node& node() const {
    if (!node_) throw StructureError("use of an undefined tensor");
    return *node_;
  }
  std::shared_ptr<Node> node_;
};

inline void Tensor::backward(const Matrix& seed) const {
  auto& root = node();
  if (seed.rows() != root.value.rows() || seed.cols() != root.value.cols())
    throw StructureError("backward: seed shape does not match the output");
  // reverse topological order by iterative DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size()) n->backward(*n);
  }
  // interior gradients are not needed after the pass
  for (Node* n : order)
    if (n->backward) n->grad.resize(0, 0);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw StructureError(what);
}
inline void push(const std::shared_ptr<Node>& p, const Matrix& g) {
  if (p->requires_grad) p->accumulate(g);
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.cols() == b.rows(), "matmul: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  return Tensor::make(a.value() * b.value(), {a, b}, [](Node& n) {
    const auto& a = n.parents[0];
    const auto& b = n.parents[1];
    if (a->requires_grad) a->accumulate(n.grad * b->value.transpose());
    if (b->requires_grad) b->accumulate(a->value.transpose() * n.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return Tensor::make(a.value() + b.value(), {a, b}, [](Node& n) {
    detail::push(n.parents[0], n.grad);
    detail::push(n.parents[1], n.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return Tensor::make(a.value() - b.value(), {a, b}, [](Node& n) {
    detail::push(n.parents[0], n.grad);
    detail::push(n.parents[1], -n.grad);
  });
}

/// a (rows x c) plus a 1 x c row broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return Tensor::make(std::move(v), {a, row}, [](Node& n) {
    detail::push(n.parents[0], n.grad);
    detail::push(n.parents[1], n.grad.colwise().sum());
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return Tensor::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    detail::push(n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
    detail::push(n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return Tensor::make(a.value() * s, {a}, [s](Node& n) { detail::push(n.parents[0], n.grad * s); });
}

/// s * a + c elementwise.
inline Tensor affine(const Tensor& a, double s, double c) {
  Matrix v = (a.value().array() * s + c).matrix();
  return Tensor::make(std::move(v), {a}, [s](Node& n) { detail::push(n.parents[0], n.grad * s); });
}

inline double softsign(double x) noexcept { return x / (1.0 + std::abs(x)); }

inline Tensor softsign(const Tensor& a) {
  Matrix v = a.value().unaryExpr([](double x) { return softsign(x); });
  return Tensor::make(std::move(v), {a}, [](Node& n) {
    const Matrix d = n.parents[0]->value.unaryExpr([](double x) { return 1.0 / ((1.0 + std::abs(x)) * (1.0 + std::abs(x))); });
    detail::push(n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double selu(double x) noexcept { return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x); }

inline Tensor selu(const Tensor& a) {
  Matrix v = a.value().unaryExpr([](double x) { return selu(x); });
  return Tensor::make(std::move(v), {a}, [](Node& n) {
    const Matrix d = n.parents[0]->value.unaryExpr(
        [](double x) { return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x); });
    detail::push(n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix v = a.value().array().tanh().matrix();
  return Tensor::make(std::move(v), {a}, [](Node& n) {
    const Matrix d = (1.0 - n.value.array().square()).matrix();
    detail::push(n.parents[0], n.grad.cwiseProduct(d));
  });
}

namespace detail {
inline Matrix softmax_rows(const Matrix& x) {
  Matrix p(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    p.row(i) = (x.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}
/// Backward of a row softmax with output p and upstream g.
inline Matrix softmax_rows_grad(const Matrix& p, const Matrix& g) {
  const Eigen::VectorXd dots = g.cwiseProduct(p).rowwise().sum();
  return p.cwiseProduct(g.colwise() - dots);
}
}  // namespace detail

inline Tensor softmax(const Tensor& a) {
  return Tensor::make(detail::softmax_rows(a.value()), {a},
                      [](Node& n) { detail::push(n.parents[0], detail::softmax_rows_grad(n.value, n.grad)); });
}

/// [a | b] along columns.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require(a.rows() == b.rows(), "concat_cols: row mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const auto ca = a.cols();
  return Tensor::make(std::move(v), {a, b}, [ca](Node& n) {
    detail::push(n.parents[0], n.grad.leftCols(ca));
    detail::push(n.parents[1], n.grad.rightCols(n.grad.cols() - ca));
  });
}

/// B x (t f) -> (B t) x f: each row becomes t consecutive token rows.
inline Tensor split_tokens(const Tensor& a, Eigen::Index tokens) {
  detail::require(tokens > 0 && a.cols() % tokens == 0, "split_tokens: width not divisible");
  const auto f = a.cols() / tokens;
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), a.rows() * tokens, f);
  return Tensor::make(std::move(v), {a}, [](Node& n) {
    const auto& p = n.parents[0];
    detail::push(p, Eigen::Map<const Matrix>(n.grad.data(), p->value.rows(), p->value.cols()));
  });
}

/// Interleaves equally shaped B x d tensors into (B k) x d, row b*k+i from input i.
inline Tensor stack_tokens(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "stack_tokens: no inputs");
  const auto b = parts[0].rows();
  const auto d = parts[0].cols();
  const auto k = static_cast<Eigen::Index>(parts.size());
  for (const auto& p : parts) detail::require(p.rows() == b && p.cols() == d, "stack_tokens: shape mismatch");
  Matrix v(b * k, d);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index r = 0; r < b; ++r) v.row(r * k + i) = parts[static_cast<std::size_t>(i)].value().row(r);
  return Tensor::make(std::move(v), parts, [b, k, d](Node& n) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& p = n.parents[static_cast<std::size_t>(i)];
      if (!p->requires_grad) continue;
      Matrix g(b, d);
      for (Eigen::Index r = 0; r < b; ++r) g.row(r) = n.grad.row(r * k + i);
      p->accumulate(g);
    }
  });
}

/// (B t) x d -> B x d, mean over each group of t consecutive rows.
inline Tensor token_mean(const Tensor& a, Eigen::Index tokens) {
  detail::require(tokens > 0 && a.rows() % tokens == 0, "token_mean: rows not divisible");
  const auto b = a.rows() / tokens;
  Matrix v = Matrix::Zero(b, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) v.row(r / tokens) += a.value().row(r);
  v /= static_cast<double>(tokens);
  return Tensor::make(std::move(v), {a}, [tokens](Node& n) {
    const auto& p = n.parents[0];
    if (!p->requires_grad) return;
    Matrix g(p->value.rows(), p->value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) = n.grad.row(r / tokens) / static_cast<double>(tokens);
    p->accumulate(g);
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return Tensor::make(std::move(v), {a}, [](Node& n) {
    const auto& p = n.parents[0];
    detail::push(p, Matrix::Constant(p->value.rows(), p->value.cols(), n.grad(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  detail::require(a.value().size() > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Mean squared difference to a constant target.
inline Tensor mse(const Tensor& a, const Matrix& target) {
  detail::require(a.rows() == target.rows() && a.cols() == target.cols(), "mse: shape mismatch");
  const Tensor d = sub(a, Tensor::constant(target));
  return mean(mul(d, d));
}

/// Scaled dot-product attention over per-sample token blocks. q holds
/// batch * tq rows, k and v batch * tk rows. Returns softmax(q k^T / sqrt(d)) v
/// per block. `weights`, when given, receives the (batch * tq) x tk weights.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::Index batch, Matrix* weights = nullptr) {
  detail::require(batch > 0 && q.rows() % batch == 0 && k.rows() % batch == 0, "attention: rows not divisible by batch");
  detail::require(q.cols() == k.cols(), "attention: query/key width mismatch");
  detail::require(k.rows() == v.rows(), "attention: key/value count mismatch");
  const auto tq = q.rows() / batch;
  const auto tk = k.rows() / batch;
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto probs = std::make_shared<Matrix>(q.rows(), tk);
  Matrix out(q.rows(), v.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix scores = q.value().middleRows(b * tq, tq) * k.value().middleRows(b * tk, tk).transpose() * s;
    probs->middleRows(b * tq, tq) = detail::softmax_rows(scores);
    out.middleRows(b * tq, tq) = probs->middleRows(b * tq, tq) * v.value().middleRows(b * tk, tk);
  }
  if (weights) *weights = *probs;
  return Tensor::make(std::move(out), {q, k, v}, [probs, batch, tq, tk, s](Node& n) {
    const auto& qn = n.parents[0];
    const auto& kn = n.parents[1];
    const auto& vn = n.parents[2];
    Matrix dq = Matrix::Zero(qn->value.rows(), qn->value.cols());
    Matrix dk = Matrix::Zero(kn->value.rows(), kn->value.cols());
    Matrix dv = Matrix::Zero(vn->value.rows(), vn->value.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto p = probs->middleRows(b * tq, tq);
      const auto g = n.grad.middleRows(b * tq, tq);
      dv.middleRows(b * tk, tk) = p.transpose() * g;
      const Matrix dp = g * vn->value.middleRows(b * tk, tk).transpose();
      const Matrix ds = detail::softmax_rows_grad(p, dp) * s;
      dq.middleRows(b * tq, tq) = ds * kn->value.middleRows(b * tk, tk);
      dk.middleRows(b * tk, tk) = ds.transpose() * qn->value.middleRows(b * tq, tq);
    }
    detail::push(qn, dq);
    detail::push(kn, dk);
    detail::push(vn, dv);
  });
}

}  // namespace shapeopt::nn
