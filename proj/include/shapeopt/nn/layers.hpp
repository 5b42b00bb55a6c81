/// @file layers.hpp
/// @brief Dense and attention layers, activations and a sequential network
/// with residual connections.
#pragma once

#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shapeopt/nn/tensor.hpp"

namespace shapeopt::nn {

/// Named trainable arrays, in a fixed order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline void append(ParamList& out, const ParamList& more) { out.insert(out.end(), more.begin(), more.end()); }

inline void zero_grad(const ParamList& ps) {
  for (auto [name, t] : ps) t.zero_grad();
}

inline std::size_t parameter_count(const ParamList& ps) {
  std::size_t n = 0;
  for (const auto& [name, t] : ps) n += static_cast<std::size_t>(t.value().size());
  return n;
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-b, b);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

class Dense {
 public:
  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
      : w_(Tensor::variable(fan_in_uniform(in, out, in, rng))), b_(Tensor::variable(fan_in_uniform(1, out, in, rng))) {}

  Tensor forward(const Tensor& x) const {
    if (x.cols() != w_.rows())
      throw StructureError("dense: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(w_.rows()));
    return add_row(matmul(x, w_), b_);
  }

  Eigen::Index in() const { return w_.rows(); }
  Eigen::Index out() const { return w_.cols(); }
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

  /// Square layer with W = I, b = 0.
  void set_identity() {
    if (w_.rows() != w_.cols()) throw StructureError("set_identity on a non-square layer");
    w_.value().setIdentity();
    b_.value().setZero();
  }

  ParamList params(const std::string& prefix) const { return {{prefix + ".w", w_}, {prefix + ".b", b_}}; }

 private:
  Tensor w_;
  Tensor b_;
};

enum class Activation { identity, softsign, selu, tanh, softmax };

inline Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::softsign: return softsign(x);
    case Activation::selu: return selu(x);
    case Activation::tanh: return tanh(x);
    case Activation::softmax: return softmax(x);
  }
  return x;
}

/// Single-head attention with learned query, key and value projections.
/// Inputs are token rows grouped per sample (see `attention`).
class Attention {
 public:
  Attention() = default;
  Attention(Eigen::Index dim, std::mt19937_64& rng) : q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng) {}

  Tensor self(const Tensor& x, Eigen::Index batch, Matrix* weights = nullptr) const {
    return attention(q_.forward(x), k_.forward(x), v_.forward(x), batch, weights);
  }
  Tensor cross(const Tensor& queries, const Tensor& context, Eigen::Index batch, Matrix* weights = nullptr) const {
    if (queries.cols() != context.cols()) throw StructureError("cross attention: stream widths differ");
    return attention(q_.forward(queries), k_.forward(context), v_.forward(context), batch, weights);
  }

  Dense& value_projection() { return v_; }
  Eigen::Index dim() const { return q_.in(); }

  ParamList params(const std::string& prefix) const {
    ParamList p = q_.params(prefix + ".q");
    append(p, k_.params(prefix + ".k"));
    append(p, v_.params(prefix + ".v"));
    return p;
  }

 private:
  Dense q_, k_, v_;
};

// ---------------------------------------------------------------------------
// Sequential network
// ---------------------------------------------------------------------------

struct SelfAttentionLayer {
  Attention attn;
  Eigen::Index tokens = 1;  // rows per sample
};

/// Adds the output recorded after layer `from` (-1 = network input).
struct ResidualAdd {
  int from = -1;
};

using Layer = std::variant<Dense, Activation, SelfAttentionLayer, ResidualAdd>;

class Network {
 public:
  Network& dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    layers_.emplace_back(Dense(in, out, rng));
    return *this;
  }
  Network& activation(Activation a) {
    layers_.emplace_back(a);
    return *this;
  }
  Network& self_attention(Eigen::Index dim, Eigen::Index tokens, std::mt19937_64& rng) {
    layers_.emplace_back(SelfAttentionLayer{Attention(dim, rng), tokens});
    return *this;
  }
  Network& residual(int from) {
    if (from < -1 || from >= static_cast<int>(layers_.size())) throw StructureError("residual: bad source layer");
    layers_.emplace_back(ResidualAdd{from});
    return *this;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return layers_.at(i); }

  /// Evaluates and records the graph for `backward`.
  Tensor forward(const Tensor& x) {
    outputs_.clear();
    input_ = x;
    Tensor h = x;
    for (auto& l : layers_) {
      if (auto* d = std::get_if<Dense>(&l)) {
        h = d->forward(h);
      } else if (auto* a = std::get_if<Activation>(&l)) {
        h = activate(h, *a);
      } else if (auto* s = std::get_if<SelfAttentionLayer>(&l)) {
        if (h.rows() % s->tokens != 0) throw StructureError("self attention: rows not divisible by token count");
        h = s->attn.self(h, h.rows() / s->tokens);
      } else {
        const int from = std::get<ResidualAdd>(l).from;
        h = add(h, from < 0 ? input_ : outputs_[static_cast<std::size_t>(from)]);
      }
      outputs_.push_back(h);
    }
    output_ = h;
    return h;
  }

  /// Pushes dL/doutput through the recorded graph; gradients accumulate on
  /// the parameters (and on the input when it is a variable).
  void backward(const Matrix& grad_output) {
    if (!output_.defined()) throw StructureError("backward called before forward");
    output_.backward(grad_output);
    output_ = Tensor();
    outputs_.clear();
    input_ = Tensor();
  }

  ParamList params(const std::string& prefix = "net") const {
    ParamList p;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto tag = prefix + "." + std::to_string(i);
      if (const auto* d = std::get_if<Dense>(&layers_[i])) append(p, d->params(tag));
      if (const auto* s = std::get_if<SelfAttentionLayer>(&layers_[i])) append(p, s->attn.params(tag));
    }
    return p;
  }

 private:
  std::vector<Layer> layers_;
  std::vector<Tensor> outputs_;
  Tensor input_;
  Tensor output_;
};

}  // namespace shapeopt::nn
