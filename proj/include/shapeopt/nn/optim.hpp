/// @file optim.hpp
/// @brief Adam, soft target tracking and the parameter checkpoint format.
#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "shapeopt/nn/layers.hpp"

namespace shapeopt::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& [name, t] : params_) {
      m_.push_back(Matrix::Zero(t.rows(), t.cols()));
      v_.push_back(Matrix::Zero(t.rows(), t.cols()));
    }
  }

  /// One bias-corrected update from the gradients currently on the parameters.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor p = params_[i].second;
      const Matrix g = p.grad();
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseProduct(g);
      p.value().array() -= opts_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
    }
  }

  void zero_grad() { nn::zero_grad(params_); }

  long steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }
  const ParamList& params() const { return params_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  ParamList params_;
  AdamOptions opts_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// target <- tau * target + (1 - tau) * online, elementwise.
inline void soft_update(const ParamList& target, const ParamList& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw DomainError("soft_update: tau outside [0, 1]");
  if (target.size() != online.size()) throw StructureError("soft_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor t = target[i].second;
    const auto& o = online[i].second;
    if (t.rows() != o.rows() || t.cols() != o.cols()) throw StructureError("soft_update: shape mismatch at " + target[i].first);
    t.value() = tau * t.value() + (1.0 - tau) * o.value();
  }
}

inline void copy_params(const ParamList& target, const ParamList& online) { soft_update(target, online, 0.0); }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Named arrays. Text format:
///   shapeopt-checkpoint 1
///   <name> <rows> <cols>
///   <rows*cols values, shortest round-trip decimal>
/// repeated, in name order.
using Checkpoint = std::map<std::string, Matrix>;

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "shapeopt-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& [name, m] : ck) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) throw IoError("checkpoint: bad array name '" + name + "'");
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.size(); ++i) os << (i ? " " : "") << format_double(m.data()[i]);
    os << '\n';
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "shapeopt-checkpoint") throw IoError("checkpoint: missing header");
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  while (is >> name) {
    if (!(is >> rows >> cols) || rows < 0 || cols < 0) throw IoError("checkpoint: bad shape for " + name);
    Matrix m(rows, cols);
    std::string tok;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (!(is >> tok)) throw IoError("checkpoint: truncated array " + name);
      m.data()[i] = parse_double(tok);
    }
    if (!ck.emplace(name, std::move(m)).second) throw IoError("checkpoint: duplicate array " + name);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return read_checkpoint(is);
}

inline void export_params(Checkpoint& ck, const ParamList& ps) {
  for (const auto& [name, t] : ps) ck[name] = t.value();
}

/// Copies arrays into the parameters; every parameter must be present with its shape.
inline void import_params(const Checkpoint& ck, const ParamList& ps) {
  for (auto [name, t] : ps) {
    const auto it = ck.find(name);
    if (it == ck.end()) throw IoError("checkpoint: missing array " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) throw IoError("checkpoint: shape mismatch for " + name);
    t.value() = it->second;
  }
}

inline void export_optimizer(Checkpoint& ck, const std::string& prefix, Adam& opt) {
  const auto& ps = opt.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ck[prefix + ".m." + ps[i].first] = opt.first_moments()[i];
    ck[prefix + ".v." + ps[i].first] = opt.second_moments()[i];
  }
  ck[prefix + ".steps"] = Matrix::Constant(1, 1, static_cast<double>(opt.steps()));
}

inline void import_optimizer(const Checkpoint& ck, const std::string& prefix, Adam& opt) {
  const auto& ps = opt.params();
  auto get = [&](const std::string& key) -> const Matrix& {
    const auto it = ck.find(key);
    if (it == ck.end()) throw IoError("checkpoint: missing array " + key);
    return it->second;
  };
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& m = get(prefix + ".m." + ps[i].first);
    const auto& v = get(prefix + ".v." + ps[i].first);
    const auto& t = ps[i].second;
    if (m.rows() != t.rows() || m.cols() != t.cols() || v.rows() != t.rows() || v.cols() != t.cols())
      throw IoError("checkpoint: moment shape mismatch for " + ps[i].first);
    opt.first_moments()[i] = m;
    opt.second_moments()[i] = v;
  }
  opt.set_steps(static_cast<long>(get(prefix + ".steps")(0, 0)));
}

}  // namespace shapeopt::nn
