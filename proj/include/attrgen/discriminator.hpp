#pragma once

// Projection discriminator over decoder hidden-state sequences:
//   D(s, l) = sigmoid(l_v^T W phi(s) + v^T phi(s))
// where phi is a bidirectional GRU summary of the sequence.

#include <span>
#include <vector>

#include "attrgen/layers.hpp"

namespace attrgen {

template <typename Scalar>
class DiscriminatorGraph;

template <typename Scalar>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int state_dim, int attr_width, int hidden)
      : fwd(state_dim, hidden),
        bwd(state_dim, hidden),
        proj(std::vector<Index>{attr_width, 2 * hidden}, true),
        uncond(std::vector<Index>{2 * hidden, 1}, true),
        state_dim_(state_dim),
        attr_width_(attr_width),
        hidden_(hidden) {}

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
    double b = 1.0 / std::sqrt(static_cast<double>(2 * hidden_));
    fill_uniform(proj, b, rng);
    fill_uniform(uncond, b, rng);
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> p;
    fwd.collect(p, "disc.fwd");
    bwd.collect(p, "disc.bwd");
    p.emplace_back("disc.W", &proj);
    p.emplace_back("disc.v", &uncond);
    return p;
  }

  int state_dim() const { return state_dim_; }
  int attr_width() const { return attr_width_; }
  int hidden() const { return hidden_; }

  DiscriminatorGraph<Scalar> on(Tape<Scalar>& tape, bool trainable = true);

  GruCell<Scalar> fwd, bwd;
  Tensor<Scalar> proj;    // W: attr_width x 2 hidden
  Tensor<Scalar> uncond;  // v: 2 hidden x 1

 private:
  int state_dim_ = 0;
  int attr_width_ = 0;
  int hidden_ = 0;
};

template <typename Scalar>
class DiscriminatorGraph {
 public:
  DiscriminatorGraph(Discriminator<Scalar>& d, Tape<Scalar>& tape, bool trainable)
      : d_(&d), tape_(&tape) {
    fwd_ = d.fwd.bind(tape, trainable);
    bwd_ = d.bwd.bind(tape, trainable);
    proj_ = bind_param(tape, d.proj, trainable);
    uncond_ = bind_param(tape, d.uncond, trainable);
  }

  /// phi(s): [final forward state ; final backward state], batch x 2 hidden.
  /// Row b covers states[0 .. lengths[b]).
  Var<Scalar> encode_states(std::span<const Var<Scalar>> states, std::span<const int> lengths) {
    if (states.empty()) throw ContractError("encode_states: empty state sequence");
    for (int len : lengths) {
      if (len < 1) throw ContractError("encode_states: empty state sequence");
    }
    for (const auto& s : states) {
      if (s.cols() != d_->state_dim()) throw DimensionError("encode_states: state width mismatch");
    }
    auto f = gru_run(fwd_, states, lengths);
    auto b = gru_run(bwd_, states, lengths, true);
    return concat_cols({f.back(), b.front()});
  }

  /// Pre-sigmoid score l_v^T W phi + v^T phi, batch x 1.
  Var<Scalar> logit(const Var<Scalar>& phi, const Matrix<Scalar>& one_hot) {
    if (one_hot.cols() != d_->attr_width()) {
      throw DimensionError("discriminator: attribute width " + std::to_string(one_hot.cols()) +
                           " does not match W rows " + std::to_string(d_->attr_width()));
    }
    if (one_hot.rows() != phi.rows()) throw DimensionError("discriminator: batch mismatch");
    auto lv = tape_->constant(one_hot);
    auto projected = row_sum(mul(matmul(lv, proj_), phi));
    auto unconditional = matmul(phi, uncond_);
    return projected + unconditional;
  }

  Var<Scalar> score(const Var<Scalar>& phi, const Matrix<Scalar>& one_hot) {
    return sigmoid(logit(phi, one_hot));
  }

  Tape<Scalar>& tape() const { return *tape_; }

 private:
  Discriminator<Scalar>* d_;
  Tape<Scalar>* tape_;
  GruVars<Scalar> fwd_, bwd_;
  Var<Scalar> proj_, uncond_;
};

template <typename Scalar>
DiscriminatorGraph<Scalar> Discriminator<Scalar>::on(Tape<Scalar>& tape, bool trainable) {
  return DiscriminatorGraph<Scalar>(*this, tape, trainable);
}

}  // namespace attrgen
