#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every quantity is a 2-D Eigen matrix; a rank-1 tensor of length n is a
// 1 x n row and a scalar is 1 x 1. Operations are free functions over
// Var handles; each call appends one node to the tape that owns its inputs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "attrgen/errors.hpp"

namespace attrgen {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline std::string shape_str(Index r, Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename Scalar>
bool all_finite(const Matrix<Scalar>& m) {
  return m.allFinite();
}

}  // namespace detail

/// Dense real tensor of rank 0, 1 or 2 with an optional gradient buffer.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() : Tensor(std::vector<Index>{1}) {}

  explicit Tensor(std::vector<Index> shape, bool requires_grad = false)
      : shape_(std::move(shape)), requires_grad_(requires_grad) {
    auto [r, c] = matrix_dims(shape_);
    value_ = Matrix<Scalar>::Zero(r, c);
  }

  explicit Tensor(Matrix<Scalar> value, bool requires_grad = false)
      : shape_{value.rows(), value.cols()}, value_(std::move(value)), requires_grad_(requires_grad) {}

  static Tensor from(std::vector<Index> shape, std::span<const Scalar> values) {
    Tensor t(std::move(shape));
    if (static_cast<Index>(values.size()) != t.size()) {
      throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                           " values for shape of size " + std::to_string(t.size()));
    }
    std::copy(values.begin(), values.end(), t.value_.data());
    return t;
  }

  static Tensor from(std::vector<Index> shape, std::initializer_list<Scalar> values) {
    return from(std::move(shape), std::span<const Scalar>(values.begin(), values.size()));
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index size() const { return value_.size(); }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }

  Matrix<Scalar>& value() { return value_; }
  const Matrix<Scalar>& value() const { return value_; }
  std::span<Scalar> data() { return {value_.data(), static_cast<std::size_t>(value_.size())}; }
  std::span<const Scalar> data() const {
    return {value_.data(), static_cast<std::size_t>(value_.size())};
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  const Matrix<Scalar>& grad() const {
    if (!grad_) throw ContractError("Tensor::grad: no gradient populated");
    return *grad_;
  }
  Matrix<Scalar>& grad() {
    if (!grad_) throw ContractError("Tensor::grad: no gradient populated");
    return *grad_;
  }
  void zero_grad() { grad_ = Matrix<Scalar>::Zero(value_.rows(), value_.cols()); }
  void clear_grad() { grad_.reset(); }

  bool all_finite() const { return value_.allFinite(); }

 private:
  static std::pair<Index, Index> matrix_dims(const std::vector<Index>& shape) {
    for (Index d : shape) {
      if (d <= 0) throw DimensionError("Tensor: dimension sizes must be positive");
    }
    switch (shape.size()) {
      case 0:
        return {1, 1};
      case 1:
        return {1, shape[0]};
      case 2:
        return {shape[0], shape[1]};
      default:
        throw DimensionError("Tensor: rank > 2 is not supported");
    }
  }

  std::vector<Index> shape_;
  Matrix<Scalar> value_;
  bool requires_grad_ = false;
  std::optional<Matrix<Scalar>> grad_;
};

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw DimensionError("Var::item: not a scalar");
    return value()(0, 0);
  }
  bool needs_grad() const { return tape_->needs_grad(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Enables NaN/Inf detection on every value pushed to the tape.
  void set_finite_checks(bool on) { check_finite_ = on; }

  Var<Scalar> constant(Matrix<Scalar> value) { return push(std::move(value), false, {}, nullptr); }

  Var<Scalar> scalar(Scalar v) {
    Matrix<Scalar> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Binds a tensor as a leaf. Gradients reach `t.grad` on backward when
  /// `t.requires_grad()`. The tensor must outlive the tape.
  Var<Scalar> leaf(Tensor<Scalar>& t) {
    if (auto it = leaf_ids_.find(&t); it != leaf_ids_.end()) return {this, it->second};
    Node n;
    n.bound = &t;
    n.needs_grad = t.requires_grad();
    auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    leaf_ids_.emplace(&t, id);
    return {this, id};
  }

  /// Reads a tensor without ever accumulating into its gradient.
  Var<Scalar> frozen(const Tensor<Scalar>& t) {
    Node n;
    n.bound_const = &t;
    auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    return {this, id};
  }

  Var<Scalar> push(Matrix<Scalar> value, bool needs_grad, std::vector<std::uint32_t> inputs,
                   Backward backward) {
    if (check_finite_ && !value.allFinite()) {
      throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.inputs = std::move(inputs);
    if (needs_grad) n.backward = std::move(backward);
    auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    return {this, id};
  }

  const Matrix<Scalar>& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (n.bound) return n.bound->value();
    if (n.bound_const) return n.bound_const->value();
    return n.value;
  }

  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  const Matrix<Scalar>& grad(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (!n.grad) throw ContractError("Tape::grad: node has no gradient");
    return *n.grad;
  }

  bool has_grad(std::uint32_t id) const { return nodes_[id].grad.has_value(); }

  /// Gradient buffer of a node, zero-initialised on first access.
  Matrix<Scalar>& grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.grad) {
      const auto& v = value(id);
      n.grad = Matrix<Scalar>::Zero(v.rows(), v.cols());
    }
    return *n.grad;
  }

  const std::vector<std::uint32_t>& inputs(std::uint32_t id) const { return nodes_[id].inputs; }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Every bound leaf with requires_grad
  /// gets its gradient accumulated, zeros when it did not participate.
  void backward(Var<Scalar> loss) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    const auto& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be scalar, got " +
                          detail::shape_str(lv.rows(), lv.cols()));
    }
    visit_order_.clear();
    if (nodes_[loss.id()].needs_grad) {
      grad_buffer(loss.id()).setOnes();
      for (std::int64_t i = loss.id(); i >= 0; --i) {
        auto id = static_cast<std::uint32_t>(i);
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.grad) continue;
        visit_order_.push_back(id);
        if (n.backward) n.backward(*this, id);
      }
    }
    for (auto& n : nodes_) {
      if (!n.bound || !n.bound->requires_grad()) continue;
      if (!n.bound->has_grad()) n.bound->zero_grad();
      if (n.grad) n.bound->grad() += *n.grad;
    }
  }

  /// Node ids visited by the last backward, in visit order.
  const std::vector<std::uint32_t>& last_visit_order() const { return visit_order_; }

  void accumulate(std::uint32_t id, const Matrix<Scalar>& g) {
    if (nodes_[id].needs_grad) grad_buffer(id) += g;
  }

  template <typename Expr>
  void accumulate_expr(std::uint32_t id, const Expr& g) {
    if (nodes_[id].needs_grad) grad_buffer(id) += g;
  }

 private:
  struct Node {
    Matrix<Scalar> value;
    std::optional<Matrix<Scalar>> grad;
    std::vector<std::uint32_t> inputs;
    Backward backward;
    Tensor<Scalar>* bound = nullptr;
    const Tensor<Scalar>* bound_const = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;  // stable references across push
  std::unordered_map<const Tensor<Scalar>*, std::uint32_t> leaf_ids_;
  std::vector<std::uint32_t> visit_order_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

// ---------------------------------------------------------------------------
// Operations

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
bool any_grad(std::initializer_list<Var<Scalar>> vs) {
  for (const auto& v : vs)
    if (v.needs_grad()) return true;
  return false;
}

template <typename Scalar>
bool is_scalar(const Matrix<Scalar>& m) {
  return m.rows() == 1 && m.cols() == 1;
}

enum class Broadcast { none, left, right };

template <typename Scalar>
Broadcast check_binary(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) return Broadcast::none;
  if (is_scalar(av)) return Broadcast::left;
  if (is_scalar(bv)) return Broadcast::right;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(av.rows(), av.cols()) +
                       " vs " + shape_str(bv.rows(), bv.cols()));
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " +
                         detail::shape_str(av.rows(), av.cols()) + " x " +
                         detail::shape_str(bv.rows(), bv.cols()));
  }
  Matrix<Scalar> out = av * bv;
  auto ia = a.id(), ib = b.id();
  return tape.push(std::move(out), detail::any_grad({a, b}), {ia, ib},
                   [ia, ib](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     if (t.needs_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value(ib).transpose();
                     if (t.needs_grad(ib)) t.grad_buffer(ib).noalias() += t.value(ia).transpose() * g;
                   });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  auto bc = detail::check_binary("add", a, b);
  Matrix<Scalar> out;
  if (bc == detail::Broadcast::none) out = a.value() + b.value();
  else if (bc == detail::Broadcast::left) out = b.value().array() + a.value()(0, 0);
  else out = a.value().array() + b.value()(0, 0);
  auto ia = a.id(), ib = b.id();
  return tape.push(std::move(out), detail::any_grad({a, b}), {ia, ib},
                   [ia, ib, bc](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     if (t.needs_grad(ia)) {
                       if (bc == detail::Broadcast::left) t.grad_buffer(ia)(0, 0) += g.sum();
                       else t.grad_buffer(ia) += g;
                     }
                     if (t.needs_grad(ib)) {
                       if (bc == detail::Broadcast::right) t.grad_buffer(ib)(0, 0) += g.sum();
                       else t.grad_buffer(ib) += g;
                     }
                   });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  auto bc = detail::check_binary("sub", a, b);
  Matrix<Scalar> out;
  if (bc == detail::Broadcast::none) out = a.value() - b.value();
  else if (bc == detail::Broadcast::left) out = (-b.value().array()) + a.value()(0, 0);
  else out = a.value().array() - b.value()(0, 0);
  auto ia = a.id(), ib = b.id();
  return tape.push(std::move(out), detail::any_grad({a, b}), {ia, ib},
                   [ia, ib, bc](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     if (t.needs_grad(ia)) {
                       if (bc == detail::Broadcast::left) t.grad_buffer(ia)(0, 0) += g.sum();
                       else t.grad_buffer(ia) += g;
                     }
                     if (t.needs_grad(ib)) {
                       if (bc == detail::Broadcast::right) t.grad_buffer(ib)(0, 0) -= g.sum();
                       else t.grad_buffer(ib) -= g;
                     }
                   });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  auto bc = detail::check_binary("mul", a, b);
  Matrix<Scalar> out;
  if (bc == detail::Broadcast::none) out = a.value().cwiseProduct(b.value());
  else if (bc == detail::Broadcast::left) out = b.value() * a.value()(0, 0);
  else out = a.value() * b.value()(0, 0);
  auto ia = a.id(), ib = b.id();
  return tape.push(std::move(out), detail::any_grad({a, b}), {ia, ib},
                   [ia, ib, bc](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     const auto& av = t.value(ia);
                     const auto& bv = t.value(ib);
                     switch (bc) {
                       case detail::Broadcast::none:
                         if (t.needs_grad(ia)) t.grad_buffer(ia) += g.cwiseProduct(bv);
                         if (t.needs_grad(ib)) t.grad_buffer(ib) += g.cwiseProduct(av);
                         break;
                       case detail::Broadcast::left:
                         if (t.needs_grad(ia)) t.grad_buffer(ia)(0, 0) += g.cwiseProduct(bv).sum();
                         if (t.needs_grad(ib)) t.grad_buffer(ib) += g * av(0, 0);
                         break;
                       case detail::Broadcast::right:
                         if (t.needs_grad(ia)) t.grad_buffer(ia) += g * bv(0, 0);
                         if (t.needs_grad(ib)) t.grad_buffer(ib)(0, 0) += g.cwiseProduct(av).sum();
                         break;
                     }
                   });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

/// alpha * a + beta
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& a, std::type_identity_t<Scalar> alpha,
                   std::type_identity_t<Scalar> beta) {
  Matrix<Scalar> out = (a.value().array() * alpha + beta).matrix();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia, alpha](Tape<Scalar>& t, std::uint32_t self) {
                          t.grad_buffer(ia) += t.grad(self) * alpha;
                        });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, std::type_identity_t<Scalar> s) {
  return affine(a, s, Scalar(0));
}

template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& a) {
  return affine(a, Scalar(-1), Scalar(1));
}

/// Adds a 1 x n bias to every row of an m x n matrix.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  auto& tape = detail::same_tape(a, bias);
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != a.cols()) {
    throw DimensionError("add_bias: bias " + detail::shape_str(bv.rows(), bv.cols()) +
                         " does not fit " + detail::shape_str(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = a.value().rowwise() + bv.row(0);
  auto ia = a.id(), ib = bias.id();
  return tape.push(std::move(out), detail::any_grad({a, bias}), {ia, ib},
                   [ia, ib](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     if (t.needs_grad(ia)) t.grad_buffer(ia) += g;
                     if (t.needs_grad(ib)) t.grad_buffer(ib) += g.colwise().sum();
                   });
}

template <typename Scalar>
Scalar sigmoid_value(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return sigmoid_value(x); });
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& s = t.value(self).array();
                          t.grad_buffer(ia).array() += t.grad(self).array() * s * (Scalar(1) - s);
                        });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& y = t.value(self).array();
                          t.grad_buffer(ia).array() += t.grad(self).array() * (Scalar(1) - y * y);
                        });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& x = t.value(ia).array();
                          t.grad_buffer(ia).array() +=
                              (x > Scalar(0)).select(t.grad(self).array(), Scalar(0));
                        });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().exp().matrix();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          t.grad_buffer(ia).array() += t.grad(self).array() * t.value(self).array();
                        });
}

/// log(max(a, floor)); the gradient is zero where the floor is active.
template <typename Scalar>
Var<Scalar> log_clamped(const Var<Scalar>& a, std::type_identity_t<Scalar> floor) {
  Matrix<Scalar> out = a.value().cwiseMax(floor).array().log().matrix();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia, floor](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& x = t.value(ia).array();
                          t.grad_buffer(ia).array() +=
                              (x > floor).select(t.grad(self).array() / x, Scalar(0));
                        });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          t.grad_buffer(ia).array() += t.grad(self)(0, 0);
                        });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// m x n -> m x 1 row sums.
template <typename Scalar>
Var<Scalar> row_sum(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().rowwise().sum();
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& g = t.grad(self);
                          auto& ga = t.grad_buffer(ia);
                          ga.colwise() += g.col(0);
                        });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape<Scalar>& tape = *parts.front().tape();
  Index rows = parts.front().rows();
  Index cols = 0;
  bool grad = false;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_cols: operands on different tapes");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    grad = grad || p.needs_grad();
    ids.push_back(p.id());
  }
  Matrix<Scalar> out(rows, cols);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  auto inputs = ids;
  return tape.push(std::move(out), grad, std::move(inputs),
                   [ids](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     Index o = 0;
                     for (auto id : ids) {
                       Index c = t.value(id).cols();
                       if (t.needs_grad(id)) t.grad_buffer(id) += g.middleCols(o, c);
                       o += c;
                     }
                   });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts) {
  return concat_cols(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  Matrix<Scalar> out = a.value().middleCols(begin, count);
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia, begin, count](Tape<Scalar>& t, std::uint32_t self) {
                          t.grad_buffer(ia).middleCols(begin, count) += t.grad(self);
                        });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Tape<Scalar>& tape = *parts.front().tape();
  Index cols = parts.front().cols();
  Index rows = 0;
  bool grad = false;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_rows: operands on different tapes");
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
    grad = grad || p.needs_grad();
    ids.push_back(p.id());
  }
  Matrix<Scalar> out(rows, cols);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  auto inputs = ids;
  return tape.push(std::move(out), grad, std::move(inputs),
                   [ids](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     Index o = 0;
                     for (auto id : ids) {
                       Index r = t.value(id).rows();
                       if (t.needs_grad(id)) t.grad_buffer(id) += g.middleRows(o, r);
                       o += r;
                     }
                   });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts) {
  return concat_rows(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: range out of bounds");
  }
  Matrix<Scalar> out = a.value().middleRows(begin, count);
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia, begin, count](Tape<Scalar>& t, std::uint32_t self) {
                          t.grad_buffer(ia).middleRows(begin, count) += t.grad(self);
                        });
}

/// Row lookup: out.row(i) = table.row(ids[i]).
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, std::span<const int> ids) {
  const auto& tv = table.value();
  Matrix<Scalar> out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  auto it = table.id();
  return table.tape()->push(std::move(out), table.needs_grad(), {it},
                            [it, rows = std::move(rows)](Tape<Scalar>& t, std::uint32_t self) {
                              const auto& g = t.grad(self);
                              auto& gt = t.grad_buffer(it);
                              for (std::size_t i = 0; i < rows.size(); ++i) {
                                gt.row(rows[i]) += g.row(static_cast<Index>(i));
                              }
                            });
}

/// Row-wise choice: out.row(i) = take_a[i] ? a.row(i) : b.row(i).
template <typename Scalar>
Var<Scalar> select_rows(std::span<const char> take_a, const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols() ||
      static_cast<Index>(take_a.size()) != a.rows()) {
    throw DimensionError("select_rows: shape mismatch");
  }
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) out.row(i) = take_a[i] ? a.value().row(i) : b.value().row(i);
  std::vector<char> mask(take_a.begin(), take_a.end());
  auto ia = a.id(), ib = b.id();
  return tape.push(std::move(out), detail::any_grad({a, b}), {ia, ib},
                   [ia, ib, mask = std::move(mask)](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     bool ga = t.needs_grad(ia), gb = t.needs_grad(ib);
                     for (Index i = 0; i < g.rows(); ++i) {
                       if (mask[i]) {
                         if (ga) t.grad_buffer(ia).row(i) += g.row(i);
                       } else if (gb) {
                         t.grad_buffer(ib).row(i) += g.row(i);
                       }
                     }
                   });
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    Scalar m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  Matrix<Scalar> out = softmax_rows_value(a.value());
  auto ia = a.id();
  return a.tape()->push(std::move(out), a.needs_grad(), {ia},
                        [ia](Tape<Scalar>& t, std::uint32_t self) {
                          const auto& s = t.value(self);
                          const auto& g = t.grad(self);
                          Matrix<Scalar> dot = g.cwiseProduct(s).rowwise().sum();
                          Matrix<Scalar> gx = (g.colwise() - dot.col(0)).cwiseProduct(s);
                          t.grad_buffer(ia) += gx;
                        });
}

/// Sum over rows i of weights[i] * (-log softmax(logits.row(i))[targets[i]]).
/// Rows with zero weight are skipped entirely, so their target is not read.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::span<const int> targets,
                                  std::span<const Scalar> weights) {
  const auto& lv = logits.value();
  const Index n = lv.rows();
  const Index vocab = lv.cols();
  if (static_cast<Index>(targets.size()) != n || static_cast<Index>(weights.size()) != n) {
    throw DimensionError("softmax_cross_entropy: targets/weights do not match logits rows");
  }
  Matrix<Scalar> probs(n, vocab);
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    if (weights[i] == Scalar(0)) {
      probs.row(i).setZero();
      continue;
    }
    int tgt = targets[i];
    if (tgt < 0 || tgt >= vocab) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(tgt) +
                       " outside [0," + std::to_string(vocab) + ")");
    }
    Scalar m = lv.row(i).maxCoeff();
    auto shifted = (lv.row(i).array() - m);
    Scalar lse = std::log(shifted.exp().sum());
    total += weights[i] * (lse - shifted(tgt));
    probs.row(i) = (shifted - lse).exp();
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total;
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<Scalar> w(weights.begin(), weights.end());
  auto il = logits.id();
  return logits.tape()->push(
      std::move(out), logits.needs_grad(), {il},
      [il, probs = std::move(probs), tg = std::move(tg), w = std::move(w)](Tape<Scalar>& t,
                                                                          std::uint32_t self) {
        Scalar g = t.grad(self)(0, 0);
        auto& gl = t.grad_buffer(il);
        for (Index i = 0; i < probs.rows(); ++i) {
          if (w[i] == Scalar(0)) continue;
          gl.row(i) += (g * w[i]) * probs.row(i);
          gl(i, tg[i]) -= g * w[i];
        }
      });
}

/// Single-distribution form: logits is 1 x V.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, int target) {
  if (logits.rows() != 1) throw DimensionError("softmax_cross_entropy: expected a single row");
  const int t[1] = {target};
  const Scalar w[1] = {Scalar(1)};
  return softmax_cross_entropy(logits, std::span<const int>(t), std::span<const Scalar>(w));
}

/// Same value, no gradient flows back through it.
template <typename Scalar>
Var<Scalar> stop_gradient(const Var<Scalar>& a) {
  return a.tape()->constant(a.value());
}

/// Elementwise maximum over a list of equally shaped operands; valid[k][i]
/// marks whether row i of operand k takes part. Rows with no valid operand
/// produce zeros.
template <typename Scalar>
Var<Scalar> masked_max(std::span<const Var<Scalar>> parts,
                       const std::vector<std::vector<char>>& valid) {
  if (parts.empty()) throw ContractError("masked_max: no operands");
  if (valid.size() != parts.size()) throw DimensionError("masked_max: mask count mismatch");
  Tape<Scalar>& tape = *parts.front().tape();
  const Index rows = parts.front().rows();
  const Index cols = parts.front().cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(rows, cols);
  std::vector<int> arg(static_cast<std::size_t>(rows * cols), -1);
  bool grad = false;
  std::vector<std::uint32_t> ids;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    if (p.tape() != &tape || p.rows() != rows || p.cols() != cols ||
        static_cast<Index>(valid[k].size()) != rows) {
      throw DimensionError("masked_max: operand shape mismatch");
    }
    grad = grad || p.needs_grad();
    ids.push_back(p.id());
    const auto& v = p.value();
    for (Index i = 0; i < rows; ++i) {
      if (!valid[k][i]) continue;
      for (Index j = 0; j < cols; ++j) {
        int& a = arg[static_cast<std::size_t>(i * cols + j)];
        if (a < 0 || v(i, j) > out(i, j)) {
          out(i, j) = v(i, j);
          a = static_cast<int>(k);
        }
      }
    }
  }
  auto inputs = ids;
  return tape.push(std::move(out), grad, std::move(inputs),
                   [ids, arg = std::move(arg), cols](Tape<Scalar>& t, std::uint32_t self) {
                     const auto& g = t.grad(self);
                     for (Index i = 0; i < g.rows(); ++i) {
                       for (Index j = 0; j < cols; ++j) {
                         int a = arg[static_cast<std::size_t>(i * cols + j)];
                         if (a >= 0 && t.needs_grad(ids[a])) t.grad_buffer(ids[a])(i, j) += g(i, j);
                       }
                     }
                   });
}

}  // namespace attrgen
