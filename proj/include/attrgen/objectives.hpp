#pragma once

// Training losses: autoencoding, back-translation, interpolated
// reconstruction, and the matched/mismatched adversarial objective.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrgen/discriminator.hpp"
#include "attrgen/generator.hpp"

namespace attrgen {

/// Floor applied inside every log of the adversarial terms.
inline constexpr double kLogFloor = 1e-12;

/// The loss combinations that can be trained.
enum class LossConfig { ae, int_only, ae_adv, ae_bt_adv, int_adv };

inline constexpr LossConfig kAllLossConfigs[] = {LossConfig::ae, LossConfig::int_only,
                                                  LossConfig::ae_adv, LossConfig::ae_bt_adv,
                                                  LossConfig::int_adv};

inline std::string to_string(LossConfig c) {
  switch (c) {
    case LossConfig::ae: return "ae";
    case LossConfig::int_only: return "int";
    case LossConfig::ae_adv: return "ae_adv";
    case LossConfig::ae_bt_adv: return "ae_bt_adv";
    case LossConfig::int_adv: return "int_adv";
  }
  return "?";
}

inline LossConfig parse_loss_config(std::string_view name) {
  for (auto c : kAllLossConfigs) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown loss configuration '" + std::string(name) +
                    "' (expected ae, int, ae_adv, ae_bt_adv or int_adv)");
}

inline bool uses_adversarial(LossConfig c) {
  return c == LossConfig::ae_adv || c == LossConfig::ae_bt_adv || c == LossConfig::int_adv;
}
inline bool uses_interpolation(LossConfig c) {
  return c == LossConfig::int_only || c == LossConfig::int_adv;
}
inline bool uses_autoencoding(LossConfig c) {
  return c == LossConfig::ae || c == LossConfig::ae_adv || c == LossConfig::ae_bt_adv;
}
inline bool uses_backtranslation(LossConfig c) { return c == LossConfig::ae_bt_adv; }
inline bool needs_samples(LossConfig c) { return c != LossConfig::ae; }

struct LossBreakdown {
  LossConfig config = LossConfig::int_adv;
  double lambda = 1.0;
  double reconstruction = 0;
  double adv_d = 0;  // discriminator loss, the negated objective it maximises
  double adv_g = 0;
  double total_g = 0;
  bool adversarial_active = false;
  double grad_norm_g = 0;
  double grad_norm_d = 0;
};

/// rec + lambda * adv when the adversarial term is active.
template <typename T>
T total_generator_loss(const T& reconstruction, const std::optional<T>& adv_g, double lambda) {
  if (!adv_g) return reconstruction;
  if constexpr (std::is_arithmetic_v<T>) {
    return reconstruction + static_cast<T>(lambda) * *adv_g;
  } else {
    using Scalar = typename std::remove_cvref_t<decltype(reconstruction.value())>::Scalar;
    return add(reconstruction, scale(*adv_g, static_cast<Scalar>(lambda)));
  }
}

/// Batch mean of -log p(x | z, l) under teacher forcing.
template <typename Scalar>
struct Reconstruction {
  Var<Scalar> loss;
  DecoderTrace<Scalar> trace;
};

template <typename Scalar>
Reconstruction<Scalar> reconstruct(GeneratorGraph<Scalar>& g, std::span<const TokenSequence> xs,
                                   const Var<Scalar>& z, std::span<const AttributeVector> labels,
                                   const AttributeSchema& schema) {
  auto tr = g.teacher_forced(xs, z, labels, schema);
  auto nll = g.sequence_nll(tr);
  return {scale(nll, Scalar(1) / static_cast<Scalar>(xs.size())), std::move(tr)};
}

/// L^ae = -log p(x | z_x, l).
template <typename Scalar>
Var<Scalar> loss_ae(GeneratorGraph<Scalar>& g, std::span<const TokenSequence> xs,
                    std::span<const AttributeVector> labels, const AttributeSchema& schema) {
  auto z = g.encode(xs);
  return reconstruct(g, xs, z, labels, schema).loss;
}

/// L^bt = -log p(x | z_y, l) for given generated sentences y.
template <typename Scalar>
Var<Scalar> loss_bt(GeneratorGraph<Scalar>& g, std::span<const TokenSequence> xs,
                    std::span<const AttributeVector> labels, std::span<const TokenSequence> ys,
                    const AttributeSchema& schema) {
  auto zy = g.encode(ys);
  return reconstruct(g, xs, zy, labels, schema).loss;
}

/// L^int for fixed y and gate.
template <typename Scalar>
Var<Scalar> loss_int_given(GeneratorGraph<Scalar>& g, std::span<const TokenSequence> xs,
                           std::span<const AttributeVector> labels,
                           std::span<const TokenSequence> ys, const Matrix<Scalar>& gate,
                           const AttributeSchema& schema) {
  auto zx = g.encode(xs);
  auto zy = g.encode(ys);
  auto mix = interpolate_with_gate(zx, zy, gate);
  return reconstruct(g, xs, mix.z, labels, schema).loss;
}

struct SamplingOptions {
  bool soft = false;
  SampleMode mode = SampleMode::greedy;
  double temperature = 1.0;
  int max_len = 20;
};

/// Generates y ~ p(. | z_x, l'), encoded back to z_y. In soft mode z_y is
/// computed from the soft embeddings so gradients pass through sampling.
template <typename Scalar>
struct Transfer {
  DecoderTrace<Scalar> trace;
  std::vector<TokenSequence> ys;
  Var<Scalar> z_y;
};

template <typename Scalar>
Transfer<Scalar> transfer(GeneratorGraph<Scalar>& g, const Var<Scalar>& zx,
                          std::span<const AttributeVector> target_labels,
                          const AttributeSchema& schema, const SamplingOptions& opts, Rng& rng) {
  Transfer<Scalar> t;
  if (opts.soft) {
    t.trace = g.soft_sample(zx, target_labels, schema, opts.temperature, opts.max_len);
    t.ys = t.trace.sequences();
    t.z_y = g.encode_soft(t.trace);
  } else {
    t.trace = g.hard_sample(zx, target_labels, schema, opts.mode, rng, opts.max_len);
    t.ys = t.trace.sequences();
    t.z_y = g.encode(t.ys);
  }
  return t;
}

template <typename Scalar>
struct InterpolatedLoss {
  Var<Scalar> loss;
  Var<Scalar> z_x;
  Transfer<Scalar> y;
  Matrix<Scalar> gate;
};

/// Full L^int pipeline: z_x = enc(x); y ~ dec(z_x, l'); z_y = enc(y);
/// z_xy = g * z_x + (1 - g) * z_y; loss = -log p(x | z_xy, l).
template <typename Scalar>
InterpolatedLoss<Scalar> loss_int(GeneratorGraph<Scalar>& g, std::span<const TokenSequence> xs,
                                  std::span<const AttributeVector> labels,
                                  std::span<const AttributeVector> target_labels, double gamma,
                                  const AttributeSchema& schema, const SamplingOptions& opts,
                                  Rng& rng) {
  if (labels.size() != target_labels.size()) throw DimensionError("loss_int: label batch mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == target_labels[i]) throw ContractError("loss_int: l' must differ from l");
  }
  InterpolatedLoss<Scalar> out;
  out.z_x = g.encode(xs);
  out.y = transfer(g, out.z_x, target_labels, schema, opts, rng);
  auto mix = interpolate(out.z_x, out.y.z_y, gamma, rng);
  out.gate = mix.gate;
  out.loss = reconstruct(g, xs, mix.z, labels, schema).loss;
  return out;
}

/// Copies state values onto another tape as constants.
template <typename Scalar>
std::vector<Var<Scalar>> detach_states(Tape<Scalar>& tape, std::span<const Var<Scalar>> states) {
  std::vector<Var<Scalar>> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(tape.constant(s.value()));
  return out;
}

/// Batch mean of 2 log D(h_x, l) + log(1 - D(h_y, l')) + log(1 - D(h_x, l')):
/// the quantity the discriminator maximises.
template <typename Scalar>
Var<Scalar> adversarial_objective(DiscriminatorGraph<Scalar>& d,
                                  std::span<const Var<Scalar>> hx, std::span<const int> hx_len,
                                  std::span<const Var<Scalar>> hy, std::span<const int> hy_len,
                                  std::span<const AttributeVector> labels,
                                  std::span<const AttributeVector> target_labels,
                                  const AttributeSchema& schema) {
  const auto floor = static_cast<Scalar>(kLogFloor);
  auto l = one_hot_rows<Scalar>(labels, schema);
  auto lp = one_hot_rows<Scalar>(target_labels, schema);
  auto phi_x = d.encode_states(hx, hx_len);
  auto phi_y = d.encode_states(hy, hy_len);
  auto real = log_clamped(d.score(phi_x, l), floor);
  auto fake_y = log_clamped(one_minus(d.score(phi_y, lp)), floor);
  auto fake_x = log_clamped(one_minus(d.score(phi_x, lp)), floor);
  auto value = add(add(scale(real, Scalar(2)), fake_y), fake_x);
  return mean(value);
}

/// Discriminator loss: the negated objective.
template <typename Scalar>
Var<Scalar> loss_adv_d(DiscriminatorGraph<Scalar>& d, std::span<const Var<Scalar>> hx,
                       std::span<const int> hx_len, std::span<const Var<Scalar>> hy,
                       std::span<const int> hy_len, std::span<const AttributeVector> labels,
                       std::span<const AttributeVector> target_labels,
                       const AttributeSchema& schema) {
  return scale(adversarial_objective(d, hx, hx_len, hy, hy_len, labels, target_labels, schema),
               Scalar(-1));
}

/// Non-saturating generator term, batch mean of -log D(h_y, l').
template <typename Scalar>
Var<Scalar> loss_adv_g(DiscriminatorGraph<Scalar>& d, std::span<const Var<Scalar>> hy,
                       std::span<const int> hy_len, std::span<const AttributeVector> target_labels,
                       const AttributeSchema& schema) {
  auto lp = one_hot_rows<Scalar>(target_labels, schema);
  auto phi = d.encode_states(hy, hy_len);
  return scale(mean(log_clamped(d.score(phi, lp), static_cast<Scalar>(kLogFloor))), Scalar(-1));
}

}  // namespace attrgen
