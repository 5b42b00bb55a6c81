/// @file networks.hpp
/// @brief Actor and twin-critic networks over the control-point state.
///
/// State rows are [upper control points | lower control points], each
/// surface flattened as x0 y0 x1 y1 ... . Action parameters are handled in
/// normalized form, each in (-1, 1); the environment maps them to bounds.
#pragma once

#include <random>

#include "shapeopt/nn/layers.hpp"
#include "shapeopt/nn/optim.hpp"

namespace shapeopt::nn {

struct ActorConfig {
  Eigen::Index state_dim = 68;
  Eigen::Index n_params = 4;
  Eigen::Index n_types = 1;
  Eigen::Index hidden = 256;
};

struct ActorOutput {
  Tensor params;  // B x n_params in (-1, 1)
  Tensor types;   // B x n_types, rows sum to 1
};

/// Two softsign hidden layers; a softsign parameter head and a softmax
/// action-type head.
class Actor {
 public:
  Actor(const ActorConfig& c, std::mt19937_64& rng)
      : cfg_(c),
        h1_(c.state_dim, c.hidden, rng),
        h2_(c.hidden, c.hidden, rng),
        params_head_(c.hidden, c.n_params, rng),
        type_head_(c.hidden, c.n_types, rng) {}

  ActorOutput forward(const Tensor& state) const {
    const Tensor h = softsign(h2_.forward(softsign(h1_.forward(state))));
    return {softsign(params_head_.forward(h)), softmax(type_head_.forward(h))};
  }

  ParamList params(const std::string& prefix = "actor") const {
    ParamList p = h1_.params(prefix + ".h1");
    append(p, h2_.params(prefix + ".h2"));
    append(p, params_head_.params(prefix + ".params"));
    append(p, type_head_.params(prefix + ".types"));
    return p;
  }

  /// Independent copy with identical values.
  Actor clone() const {
    std::mt19937_64 rng(0);
    Actor a(cfg_, rng);
    copy_params(a.params(), params());
    return a;
  }

  const ActorConfig& config() const { return cfg_; }

 private:
  ActorConfig cfg_;
  Dense h1_, h2_, params_head_, type_head_;
};

struct CriticConfig {
  Eigen::Index state_dim = 68;
  Eigen::Index n_params = 4;
  Eigen::Index n_types = 1;
  Eigen::Index embed = 128;
  Eigen::Index hidden = 256;
};

/// State tokens (one per surface) embedded and self-attended; then state
/// queries attend over the action-type and parameter tokens; the pooled
/// result goes through two SELU layers to a scalar Q.
class Critic {
 public:
  Critic(const CriticConfig& c, std::mt19937_64& rng)
      : cfg_(c),
        state_embed_(c.state_dim / 2, c.embed, rng),
        type_embed_(c.n_types, c.embed, rng),
        params_embed_(c.n_params, c.embed, rng),
        self_(c.embed, rng),
        cross_(c.embed, rng),
        h1_(c.embed, c.hidden, rng),
        h2_(c.hidden, c.hidden, rng),
        out_(c.hidden, 1, rng) {
    if (c.state_dim % 2 != 0) throw StructureError("critic: state width must split into two surfaces");
  }

  Tensor forward(const Tensor& state, const Tensor& types, const Tensor& params) const {
    const auto batch = state.rows();
    if (types.rows() != batch || params.rows() != batch) throw StructureError("critic: batch sizes differ");
    Tensor s = state_embed_.forward(split_tokens(state, 2));
    s = add(s, self_.self(s, batch));
    const Tensor a = stack_tokens({type_embed_.forward(types), params_embed_.forward(params)});
    s = add(s, cross_.cross(s, a, batch));
    const Tensor h = selu(h2_.forward(selu(h1_.forward(token_mean(s, 2)))));
    return out_.forward(h);
  }

  ParamList params(const std::string& prefix = "critic") const {
    ParamList p = state_embed_.params(prefix + ".state");
    append(p, type_embed_.params(prefix + ".type"));
    append(p, params_embed_.params(prefix + ".param"));
    append(p, self_.params(prefix + ".self"));
    append(p, cross_.params(prefix + ".cross"));
    append(p, h1_.params(prefix + ".h1"));
    append(p, h2_.params(prefix + ".h2"));
    append(p, out_.params(prefix + ".out"));
    return p;
  }

  Critic clone() const {
    std::mt19937_64 rng(0);
    Critic c(cfg_, rng);
    copy_params(c.params(), params());
    return c;
  }

  const CriticConfig& config() const { return cfg_; }

 private:
  CriticConfig cfg_;
  Dense state_embed_, type_embed_, params_embed_;
  Attention self_, cross_;
  Dense h1_, h2_, out_;
};

}  // namespace shapeopt::nn
