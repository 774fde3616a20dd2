#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attrgen/autodiff.hpp"

namespace attrgen {

/// A named, non-owning view of a model's trainable tensors.
template <typename Scalar>
using ParameterList = std::vector<std::pair<std::string, Tensor<Scalar>*>>;

template <typename Scalar>
void zero_grad(const ParameterList<Scalar>& params) {
  for (auto& [name, p] : params) p->zero_grad();
}

template <typename Scalar>
Scalar grad_norm(const ParameterList<Scalar>& params) {
  Scalar sq = 0;
  for (auto& [name, p] : params) {
    if (p->has_grad()) sq += p->grad().squaredNorm();
  }
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
Scalar clip_grad_norm(const ParameterList<Scalar>& params, Scalar max_norm) {
  Scalar norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    Scalar f = max_norm / norm;
    for (auto& [name, p] : params) {
      if (p->has_grad()) p->grad() *= f;
    }
  }
  return norm;
}

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list, so the same list must be passed on every step.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  long steps() const { return step_; }

  void step(const ParameterList<Scalar>& params) {
    for (auto& [name, p] : params) {
      if (!p->has_grad()) throw ContractError("Adam::step: parameter '" + name + "' has no gradient");
    }
    if (m_.empty()) {
      for (auto& [name, p] : params) {
        m_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      }
    } else if (m_.size() != params.size()) {
      throw ContractError("Adam::step: parameter list changed between steps");
    }
    ++step_;
    const Scalar b1 = static_cast<Scalar>(opts_.beta1);
    const Scalar b2 = static_cast<Scalar>(opts_.beta2);
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(opts_.beta1, step_));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(opts_.beta2, step_));
    const Scalar lr = static_cast<Scalar>(opts_.lr);
    const Scalar eps = static_cast<Scalar>(opts_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<Scalar>& p = *params[i].second;
      auto g = p.grad().array();
      m_[i].array() = b1 * m_[i].array() + (Scalar(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g * g;
      p.value().array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
      p.zero_grad();
    }
  }

  const std::vector<Matrix<Scalar>>& first_moments() const { return m_; }
  const std::vector<Matrix<Scalar>>& second_moments() const { return v_; }

 private:
  AdamOptions opts_;
  long step_ = 0;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

}  // namespace attrgen
