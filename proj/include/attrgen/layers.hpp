#pragma once

// Parameter containers shared by every network: GRU cells, affine maps and
// embedding tables, each with a `bind` that puts its tensors on a tape.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attrgen/attributes.hpp"
#include "attrgen/autodiff.hpp"
#include "attrgen/optim.hpp"

namespace attrgen {

template <typename Scalar>
void fill_uniform(Tensor<Scalar>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : t.data()) x = static_cast<Scalar>(u(rng));
}

template <typename Scalar>
Var<Scalar> bind_param(Tape<Scalar>& tape, Tensor<Scalar>& p, bool trainable) {
  return trainable ? tape.leaf(p) : tape.frozen(p);
}

template <typename Scalar>
struct GruVars {
  Var<Scalar> wx, wh, bx, bh;
  Index hidden = 0;
};

/// h' = (1 - u) * h + u * n with reset gate r, update gate u and candidate
/// n = tanh(x Wn + bn + r * (h Un + bhn)). Gate blocks are stored side by
/// side in the order [r | u | n].
template <typename Scalar>
class GruCell {
 public:
  GruCell() = default;
  GruCell(Index input, Index hidden)
      : wx(std::vector<Index>{input, 3 * hidden}, true),
        wh(std::vector<Index>{hidden, 3 * hidden}, true),
        bx(std::vector<Index>{1, 3 * hidden}, true),
        bh(std::vector<Index>{1, 3 * hidden}, true),
        input_(input),
        hidden_(hidden) {}

  void init(Rng& rng) {
    double b = 1.0 / std::sqrt(static_cast<double>(hidden_));
    fill_uniform(wx, b, rng);
    fill_uniform(wh, b, rng);
    fill_uniform(bx, b, rng);
    fill_uniform(bh, b, rng);
  }

  GruVars<Scalar> bind(Tape<Scalar>& tape, bool trainable) {
    return {bind_param(tape, wx, trainable), bind_param(tape, wh, trainable),
            bind_param(tape, bx, trainable), bind_param(tape, bh, trainable), hidden_};
  }

  void collect(ParameterList<Scalar>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".wx", &wx);
    out.emplace_back(prefix + ".wh", &wh);
    out.emplace_back(prefix + ".bx", &bx);
    out.emplace_back(prefix + ".bh", &bh);
  }

  Index input() const { return input_; }
  Index hidden() const { return hidden_; }

  Tensor<Scalar> wx, wh, bx, bh;

 private:
  Index input_ = 0;
  Index hidden_ = 0;
};

template <typename Scalar>
Var<Scalar> gru_step(const GruVars<Scalar>& c, const Var<Scalar>& x, const Var<Scalar>& h) {
  const Index d = c.hidden;
  auto gx = add_bias(matmul(x, c.wx), c.bx);
  auto gh = add_bias(matmul(h, c.wh), c.bh);
  auto r = sigmoid(slice_cols(gx, 0, d) + slice_cols(gh, 0, d));
  auto u = sigmoid(slice_cols(gx, d, d) + slice_cols(gh, d, d));
  auto n = tanh(slice_cols(gx, 2 * d, d) + mul(r, slice_cols(gh, 2 * d, d)));
  return h + mul(u, n - h);
}

/// Runs a GRU over a batch of input rows per step; row b only advances while
/// t < lengths[b]. Returns the state after every step (held fixed past the
/// end of a row) in the requested direction.
template <typename Scalar>
std::vector<Var<Scalar>> gru_run(const GruVars<Scalar>& c, std::span<const Var<Scalar>> inputs,
                                 std::span<const int> lengths, bool reverse = false) {
  if (inputs.empty()) throw ContractError("gru_run: empty input sequence");
  Tape<Scalar>& tape = *inputs.front().tape();
  const Index batch = inputs.front().rows();
  const int steps = static_cast<int>(inputs.size());
  Var<Scalar> h = tape.constant(Matrix<Scalar>::Zero(batch, c.hidden));
  std::vector<Var<Scalar>> states(inputs.size());
  std::vector<char> active(static_cast<std::size_t>(batch));
  for (int i = 0; i < steps; ++i) {
    int t = reverse ? steps - 1 - i : i;
    bool all = true;
    for (Index b = 0; b < batch; ++b) {
      active[static_cast<std::size_t>(b)] = t < lengths[static_cast<std::size_t>(b)];
      all = all && active[static_cast<std::size_t>(b)];
    }
    auto next = gru_step(c, inputs[static_cast<std::size_t>(t)], h);
    h = all ? next : select_rows(std::span<const char>(active), next, h);
    states[static_cast<std::size_t>(t)] = h;
  }
  return states;
}

template <typename Scalar>
struct LinearVars {
  Var<Scalar> w, b;
};

/// y = x W + b
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, bool bias = true)
      : w(std::vector<Index>{in, out}, true), b(std::vector<Index>{1, out}, true), has_bias_(bias) {}

  void init(Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    fill_uniform(w, bound, rng);
    if (has_bias_) fill_uniform(b, bound, rng);
  }

  LinearVars<Scalar> bind(Tape<Scalar>& tape, bool trainable) {
    LinearVars<Scalar> v{bind_param(tape, w, trainable), {}};
    if (has_bias_) v.b = bind_param(tape, b, trainable);
    return v;
  }

  void collect(ParameterList<Scalar>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    if (has_bias_) out.emplace_back(prefix + ".b", &b);
  }

  bool has_bias() const { return has_bias_; }

  Tensor<Scalar> w, b;

 private:
  bool has_bias_ = true;
};

template <typename Scalar>
Var<Scalar> apply(const LinearVars<Scalar>& l, const Var<Scalar>& x) {
  auto y = matmul(x, l.w);
  return l.b.valid() ? add_bias(y, l.b) : y;
}

/// Batch of attribute vectors as stacked one-hot rows.
template <typename Scalar>
Matrix<Scalar> one_hot_rows(std::span<const AttributeVector> labels, const AttributeSchema& schema) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(static_cast<Index>(labels.size()), schema.width());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto bits = labels[i].one_hot(schema);
    for (int j = 0; j < schema.width(); ++j) m(static_cast<Index>(i), j) = static_cast<Scalar>(bits[static_cast<std::size_t>(j)]);
  }
  return m;
}

}  // namespace attrgen
