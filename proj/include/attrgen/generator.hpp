#pragma once

// Encoder-decoder generator: a GRU encoder maps a sentence to its content
// vector z, and an attribute-conditioned GRU decoder, initialised from
// [z ; attribute embedding], produces sentences.

#include <algorithm>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attrgen/corpus.hpp"
#include "attrgen/layers.hpp"

namespace attrgen {

struct ModelConfig {
  int vocab_size = 0;
  int attr_width = 0;
  int d_emb = 64;
  int d_enc = 64;
  int d_dec = 96;
  int d_attr = 16;
  int d_disc = 64;
  bool bidirectional_encoder = false;

  /// Layer sizes used for full-scale corpora.
  static ModelConfig full_scale(int vocab_size, int attr_width) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.attr_width = attr_width;
    c.d_emb = 300;
    c.d_enc = 500;
    c.d_dec = 700;
    c.d_attr = 200;
    c.d_disc = 500;
    return c;
  }

  void validate() const {
    if (vocab_size <= Vocabulary::kNumReserved) throw ConfigError("model: vocabulary too small");
    if (attr_width < 2) throw ConfigError("model: attribute width must be >= 2");
    if (d_emb <= 0 || d_enc <= 0 || d_dec <= 0 || d_attr <= 0 || d_disc <= 0) {
      throw ConfigError("model: layer sizes must be positive");
    }
    if (bidirectional_encoder && d_enc % 2 != 0) {
      throw ConfigError("model: bidirectional encoder needs an even d_enc");
    }
  }
};

enum class DecodeMode { teacher_forced, hard_sampled, soft_sampled };
enum class SampleMode { greedy, multinomial };

/// One decoding pass over a batch. States are h_1..h_T (h_0 excluded); row b
/// is meaningful for t < lengths[b] and held constant after.
template <typename Scalar>
struct DecoderTrace {
  DecodeMode mode = DecodeMode::teacher_forced;
  Var<Scalar> h0;
  std::vector<Var<Scalar>> states;
  /// Logits of all steps stacked step-major: row t * batch + b.
  Var<Scalar> logits;
  /// Emitted (or gold) tokens per row; EOS included when reached.
  std::vector<std::vector<int>> tokens;
  std::vector<int> lengths;
  std::vector<AttributeVector> labels;
  /// Soft mode only: the expected embedding emitted at each step.
  std::vector<Var<Scalar>> soft_embeddings;

  std::size_t batch() const { return lengths.size(); }
  int steps() const { return static_cast<int>(states.size()); }

  /// Emitted tokens framed as sequences; EOS is appended to rows that hit
  /// the length limit.
  std::vector<TokenSequence> sequences() const {
    std::vector<TokenSequence> out;
    out.reserve(tokens.size());
    for (const auto& row : tokens) {
      std::vector<int> content;
      for (int t : row) {
        if (t == Vocabulary::kEos) break;
        content.push_back(t);
      }
      out.push_back(TokenSequence::from_content(content));
    }
    return out;
  }
};

template <typename Scalar>
class GeneratorGraph;

template <typename Scalar>
class Generator {
 public:
  Generator() = default;
  explicit Generator(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    embed = Tensor<Scalar>(std::vector<Index>{cfg.vocab_size, cfg.d_emb}, true);
    int enc_hidden = cfg.bidirectional_encoder ? cfg.d_enc / 2 : cfg.d_enc;
    enc = GruCell<Scalar>(cfg.d_emb, enc_hidden);
    if (cfg.bidirectional_encoder) enc_bwd = GruCell<Scalar>(cfg.d_emb, enc_hidden);
    attr_proj = Linear<Scalar>(cfg.attr_width, cfg.d_attr, false);
    init_proj = Linear<Scalar>(cfg.d_enc + cfg.d_attr, cfg.d_dec);
    dec = GruCell<Scalar>(cfg.d_emb, cfg.d_dec);
    out = Linear<Scalar>(cfg.d_dec, cfg.vocab_size);
  }

  void init(Rng& rng) {
    fill_uniform(embed, 0.1, rng);
    enc.init(rng);
    if (cfg_.bidirectional_encoder) enc_bwd.init(rng);
    attr_proj.init(rng);
    init_proj.init(rng);
    dec.init(rng);
    out.init(rng);
  }

  /// Overwrites embedding rows present in the file; dimensions must agree.
  void load_embeddings(const EmbeddingFile& ef) {
    if (ef.rows.empty()) return;
    if (ef.dim != cfg_.d_emb) {
      throw ConfigError("embedding file has dimension " + std::to_string(ef.dim) + ", model uses " +
                        std::to_string(cfg_.d_emb));
    }
    for (const auto& [id, v] : ef.rows) {
      for (int j = 0; j < ef.dim; ++j) embed.value()(id, j) = static_cast<Scalar>(v[static_cast<std::size_t>(j)]);
    }
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> p;
    p.emplace_back("gen.embed", &embed);
    enc.collect(p, "gen.enc");
    if (cfg_.bidirectional_encoder) enc_bwd.collect(p, "gen.enc_bwd");
    attr_proj.collect(p, "gen.attr");
    init_proj.collect(p, "gen.init");
    dec.collect(p, "gen.dec");
    out.collect(p, "gen.out");
    return p;
  }

  const ModelConfig& config() const { return cfg_; }

  GeneratorGraph<Scalar> on(Tape<Scalar>& tape, bool trainable = true);

  Tensor<Scalar> embed;
  GruCell<Scalar> enc, enc_bwd;
  Linear<Scalar> attr_proj, init_proj;
  GruCell<Scalar> dec;
  Linear<Scalar> out;

 private:
  ModelConfig cfg_;
};

namespace detail {

inline std::vector<int> token_column(std::span<const TokenSequence> xs, int t) {
  std::vector<int> col(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto& ids = xs[b].ids;
    col[b] = t < static_cast<int>(ids.size()) ? ids[static_cast<std::size_t>(t)] : Vocabulary::kPad;
  }
  return col;
}

inline bool sampling_allowed(int token, int step) {
  if (token == Vocabulary::kPad || token == Vocabulary::kBos || token == Vocabulary::kUnk) return false;
  if (token == Vocabulary::kEos && step == 0) return false;
  return true;
}

}  // namespace detail

/// The generator's parameters bound to one tape.
template <typename Scalar>
class GeneratorGraph {
 public:
  GeneratorGraph(Generator<Scalar>& g, Tape<Scalar>& tape, bool trainable)
      : g_(&g), tape_(&tape) {
    embed_ = bind_param(tape, g.embed, trainable);
    enc_ = g.enc.bind(tape, trainable);
    if (g.config().bidirectional_encoder) enc_bwd_ = g.enc_bwd.bind(tape, trainable);
    attr_ = g.attr_proj.bind(tape, trainable);
    init_ = g.init_proj.bind(tape, trainable);
    dec_ = g.dec.bind(tape, trainable);
    out_ = g.out.bind(tape, trainable);
  }

  Tape<Scalar>& tape() const { return *tape_; }
  const ModelConfig& config() const { return g_->config(); }
  const Var<Scalar>& embedding() const { return embed_; }

  /// z_x: final encoder state after consuming each sequence (EOS included),
  /// from a zero initial state. Returns [batch x d_enc].
  Var<Scalar> encode(std::span<const TokenSequence> xs) {
    if (xs.empty()) throw ContractError("encode: empty batch");
    int steps = 0;
    std::vector<int> lengths;
    for (const auto& x : xs) {
      if (x.ids.empty()) throw ContractError("encode: empty sequence");
      for (int id : x.ids) {
        if (id < 0 || id >= config().vocab_size) throw IndexError("encode: token id out of range");
      }
      lengths.push_back(x.length());
      steps = std::max(steps, x.length());
    }
    std::vector<Var<Scalar>> inputs;
    inputs.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      auto col = detail::token_column(xs, t);
      inputs.push_back(gather_rows(embed_, std::span<const int>(col)));
    }
    return encode_embedded(inputs, lengths);
  }

  /// Encoder over already-embedded inputs (used for soft-sampled sequences).
  Var<Scalar> encode_embedded(std::span<const Var<Scalar>> inputs, std::span<const int> lengths) {
    if (inputs.empty()) throw ContractError("encode: empty sequence");
    for (int len : lengths) {
      if (len < 1) throw ContractError("encode: empty sequence");
    }
    auto fwd = gru_run(enc_, inputs, lengths);
    if (!config().bidirectional_encoder) return fwd.back();
    auto bwd = gru_run(enc_bwd_, inputs, lengths, true);
    return concat_cols({fwd.back(), bwd.front()});
  }

  /// h_0 = tanh([z ; one_hot(l) A] W_init + b_init)
  Var<Scalar> decoder_init(const Var<Scalar>& z, std::span<const AttributeVector> labels,
                           const AttributeSchema& schema) {
    if (z.cols() != config().d_enc || z.rows() != static_cast<Index>(labels.size())) {
      throw DimensionError("decoder_init: z is " + detail::shape_str(z.rows(), z.cols()));
    }
    auto lv = tape_->constant(one_hot_rows<Scalar>(labels, schema));
    auto a = apply(attr_, lv);
    return tanh(apply(init_, concat_cols({z, a})));
  }

  /// Decoder fed BOS then the gold tokens; logits at step t score ids[t].
  DecoderTrace<Scalar> teacher_forced(std::span<const TokenSequence> xs, const Var<Scalar>& z,
                                      std::span<const AttributeVector> labels,
                                      const AttributeSchema& schema) {
    DecoderTrace<Scalar> tr;
    tr.mode = DecodeMode::teacher_forced;
    tr.labels.assign(labels.begin(), labels.end());
    int steps = 0;
    for (const auto& x : xs) {
      tr.lengths.push_back(x.length());
      tr.tokens.push_back(x.ids);
      steps = std::max(steps, x.length());
    }
    tr.h0 = decoder_init(z, labels, schema);
    std::vector<Var<Scalar>> inputs;
    for (int t = 0; t < steps; ++t) {
      std::vector<int> col(xs.size(), Vocabulary::kBos);
      if (t > 0) col = detail::token_column(xs, t - 1);
      inputs.push_back(gather_rows(embed_, std::span<const int>(col)));
    }
    tr.states = run_decoder(tr.h0, inputs, tr.lengths);
    tr.logits = apply(out_, concat_rows(std::span<const Var<Scalar>>(tr.states)));
    return tr;
  }

  /// Sum over the batch of -log p(x | z, l) from a teacher-forced trace.
  Var<Scalar> sequence_nll(const DecoderTrace<Scalar>& tf) const {
    const std::size_t batch = tf.batch();
    const int steps = tf.steps();
    std::vector<int> targets(batch * static_cast<std::size_t>(steps), Vocabulary::kPad);
    std::vector<Scalar> weights(targets.size(), Scalar(0));
    for (int t = 0; t < steps; ++t) {
      for (std::size_t b = 0; b < batch; ++b) {
        if (t < tf.lengths[b]) {
          std::size_t r = static_cast<std::size_t>(t) * batch + b;
          targets[r] = tf.tokens[b][static_cast<std::size_t>(t)];
          weights[r] = Scalar(1);
        }
      }
    }
    return softmax_cross_entropy(tf.logits, std::span<const int>(targets),
                                 std::span<const Scalar>(weights));
  }

  /// Per-row negative log-likelihoods, read from trace values.
  std::vector<Scalar> row_nll(const DecoderTrace<Scalar>& tf) const {
    const std::size_t batch = tf.batch();
    std::vector<Scalar> out(batch, Scalar(0));
    const auto& lg = tf.logits.value();
    for (int t = 0; t < tf.steps(); ++t) {
      for (std::size_t b = 0; b < batch; ++b) {
        if (t >= tf.lengths[b]) continue;
        auto row = lg.row(static_cast<Index>(static_cast<std::size_t>(t) * batch + b));
        Scalar m = row.maxCoeff();
        Scalar lse = m + std::log((row.array() - m).exp().sum());
        out[b] += lse - row(tf.tokens[b][static_cast<std::size_t>(t)]);
      }
    }
    return out;
  }

  /// Free-running decode feeding back discrete tokens. Token choices carry
  /// no gradient; the hidden states stay on the tape.
  DecoderTrace<Scalar> hard_sample(const Var<Scalar>& z, std::span<const AttributeVector> labels,
                                   const AttributeSchema& schema, SampleMode mode, Rng& rng,
                                   int max_len) {
    if (max_len < 1) throw ContractError("hard_sample: max_len must be >= 1");
    DecoderTrace<Scalar> tr;
    tr.mode = DecodeMode::hard_sampled;
    tr.labels.assign(labels.begin(), labels.end());
    const std::size_t batch = labels.size();
    tr.tokens.assign(batch, {});
    tr.lengths.assign(batch, 0);
    tr.h0 = decoder_init(z, labels, schema);
    const auto& w_out = out_.w.value();
    const auto& b_out = out_.b.value();
    std::vector<char> active(batch, 1);
    std::vector<int> input(batch, Vocabulary::kBos);
    Var<Scalar> h = tr.h0;
    Matrix<Scalar> all_logits;
    std::vector<Matrix<Scalar>> step_logits;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int t = 0; t < max_len; ++t) {
      auto x = gather_rows(embed_, std::span<const int>(input));
      auto next = gru_step(dec_, x, h);
      bool all_active = std::all_of(active.begin(), active.end(), [](char c) { return c != 0; });
      h = all_active ? next : select_rows(std::span<const char>(active), next, h);
      tr.states.push_back(h);
      Matrix<Scalar> lg = (h.value() * w_out).rowwise() + b_out.row(0);
      bool any = false;
      for (std::size_t b = 0; b < batch; ++b) {
        if (!active[b]) {
          input[b] = Vocabulary::kPad;
          continue;
        }
        int tok = mode == SampleMode::greedy ? pick_greedy(lg.row(static_cast<Index>(b)), t)
                                             : pick_multinomial(lg.row(static_cast<Index>(b)), t, rng, unif);
        tr.tokens[b].push_back(tok);
        tr.lengths[b] = t + 1;
        input[b] = tok;
        if (tok == Vocabulary::kEos) active[b] = 0;
        any = any || active[b];
      }
      step_logits.push_back(std::move(lg));
      if (!any) break;
    }
    tr.logits = tape_->constant(stack(step_logits));
    return tr;
  }

  /// Free-running decode whose next input is the temperature-softmax mixture
  /// of embeddings; differentiable end to end. Emitted tokens are the argmax.
  DecoderTrace<Scalar> soft_sample(const Var<Scalar>& z, std::span<const AttributeVector> labels,
                                   const AttributeSchema& schema, double temperature, int max_len) {
    if (!(temperature > 0)) throw ContractError("soft_sample: temperature must be > 0");
    if (max_len < 1) throw ContractError("soft_sample: max_len must be >= 1");
    DecoderTrace<Scalar> tr;
    tr.mode = DecodeMode::soft_sampled;
    tr.labels.assign(labels.begin(), labels.end());
    const std::size_t batch = labels.size();
    const int vocab = config().vocab_size;
    tr.tokens.assign(batch, {});
    tr.lengths.assign(batch, 0);
    tr.h0 = decoder_init(z, labels, schema);
    std::vector<char> active(batch, 1);
    Var<Scalar> h = tr.h0;
    std::vector<int> bos(batch, Vocabulary::kBos);
    Var<Scalar> x = gather_rows(embed_, std::span<const int>(bos));
    std::vector<Var<Scalar>> step_logits;
    const Scalar inv_t = static_cast<Scalar>(1.0 / temperature);
    for (int t = 0; t < max_len; ++t) {
      auto next = gru_step(dec_, x, h);
      bool all_active = std::all_of(active.begin(), active.end(), [](char c) { return c != 0; });
      h = all_active ? next : select_rows(std::span<const char>(active), next, h);
      tr.states.push_back(h);
      auto lg = apply(out_, h);
      step_logits.push_back(lg);
      Matrix<Scalar> mask = Matrix<Scalar>::Zero(static_cast<Index>(batch), vocab);
      for (int v = 0; v < vocab; ++v) {
        if (!detail::sampling_allowed(v, t)) mask.col(v).setConstant(Scalar(-1e9));
      }
      auto masked = add(lg, tape_->constant(mask));
      auto probs = softmax_rows(scale(masked, inv_t));
      x = matmul(probs, embed_);
      tr.soft_embeddings.push_back(x);
      const auto& mv = masked.value();
      bool any = false;
      for (std::size_t b = 0; b < batch; ++b) {
        if (!active[b]) continue;
        Index tok = 0;
        mv.row(static_cast<Index>(b)).maxCoeff(&tok);
        tr.tokens[b].push_back(static_cast<int>(tok));
        tr.lengths[b] = t + 1;
        if (tok == Vocabulary::kEos) active[b] = 0;
        any = any || active[b];
      }
      if (!any) break;
    }
    tr.logits = concat_rows(std::span<const Var<Scalar>>(step_logits));
    return tr;
  }

  /// Encoder over the soft embeddings of a soft-sampled trace.
  Var<Scalar> encode_soft(const DecoderTrace<Scalar>& tr) {
    if (tr.mode != DecodeMode::soft_sampled) throw ContractError("encode_soft: not a soft trace");
    return encode_embedded(tr.soft_embeddings, tr.lengths);
  }

 private:
  std::vector<Var<Scalar>> run_decoder(const Var<Scalar>& h0, std::span<const Var<Scalar>> inputs,
                                       std::span<const int> lengths) {
    const Index batch = h0.rows();
    std::vector<Var<Scalar>> states;
    states.reserve(inputs.size());
    std::vector<char> active(static_cast<std::size_t>(batch));
    Var<Scalar> h = h0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      bool all = true;
      for (Index b = 0; b < batch; ++b) {
        active[static_cast<std::size_t>(b)] = static_cast<int>(t) < lengths[static_cast<std::size_t>(b)];
        all = all && active[static_cast<std::size_t>(b)];
      }
      auto next = gru_step(dec_, inputs[t], h);
      h = all ? next : select_rows(std::span<const char>(active), next, h);
      states.push_back(h);
    }
    return states;
  }

  template <typename Row>
  static int pick_greedy(const Row& row, int step) {
    int best = -1;
    Scalar best_v = -std::numeric_limits<Scalar>::infinity();
    for (Index v = 0; v < row.size(); ++v) {
      if (!detail::sampling_allowed(static_cast<int>(v), step)) continue;
      if (best < 0 || row(v) > best_v) {
        best = static_cast<int>(v);
        best_v = row(v);
      }
    }
    return best;
  }

  template <typename Row>
  static int pick_multinomial(const Row& row, int step, Rng& rng,
                              std::uniform_real_distribution<double>& unif) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Index v = 0; v < row.size(); ++v) {
      if (detail::sampling_allowed(static_cast<int>(v), step)) m = std::max(m, row(v));
    }
    std::vector<double> p(static_cast<std::size_t>(row.size()), 0.0);
    double total = 0;
    for (Index v = 0; v < row.size(); ++v) {
      if (!detail::sampling_allowed(static_cast<int>(v), step)) continue;
      p[static_cast<std::size_t>(v)] = std::exp(static_cast<double>(row(v) - m));
      total += p[static_cast<std::size_t>(v)];
    }
    double r = unif(rng) * total;
    int last = -1;
    for (Index v = 0; v < row.size(); ++v) {
      if (p[static_cast<std::size_t>(v)] <= 0) continue;
      last = static_cast<int>(v);
      r -= p[static_cast<std::size_t>(v)];
      if (r < 0) return last;
    }
    return last;
  }

  static Matrix<Scalar> stack(const std::vector<Matrix<Scalar>>& parts) {
    Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Matrix<Scalar> m(rows, parts.empty() ? 0 : parts.front().cols());
    Index off = 0;
    for (const auto& p : parts) {
      m.middleRows(off, p.rows()) = p;
      off += p.rows();
    }
    return m;
  }

  Generator<Scalar>* g_;
  Tape<Scalar>* tape_;
  Var<Scalar> embed_;
  GruVars<Scalar> enc_, enc_bwd_, dec_;
  LinearVars<Scalar> attr_, init_, out_;
};

template <typename Scalar>
GeneratorGraph<Scalar> Generator<Scalar>::on(Tape<Scalar>& tape, bool trainable) {
  return GeneratorGraph<Scalar>(*this, tape, trainable);
}

/// Bernoulli(gamma) gate and the mix z_xy = g * z_x + (1 - g) * z_y.
template <typename Scalar>
struct Interpolation {
  Var<Scalar> z;
  Matrix<Scalar> gate;
};

template <typename Scalar>
Interpolation<Scalar> interpolate_with_gate(const Var<Scalar>& zx, const Var<Scalar>& zy,
                                            const Matrix<Scalar>& gate) {
  if (zx.rows() != zy.rows() || zx.cols() != zy.cols() || gate.rows() != zx.rows() ||
      gate.cols() != zx.cols()) {
    throw DimensionError("interpolate: shape mismatch");
  }
  auto& tape = *zx.tape();
  auto g = tape.constant(gate);
  auto not_g = tape.constant((Scalar(1) - gate.array()).matrix());
  return {add(mul(g, zx), mul(not_g, zy)), gate};
}

template <typename Scalar>
Matrix<Scalar> sample_gate(Index rows, Index cols, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("interpolate: gamma must lie in [0, 1]");
  Matrix<Scalar> g(rows, cols);
  std::bernoulli_distribution bern(gamma);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) g(i, j) = bern(rng) ? Scalar(1) : Scalar(0);
  return g;
}

template <typename Scalar>
Interpolation<Scalar> interpolate(const Var<Scalar>& zx, const Var<Scalar>& zy, double gamma,
                                  Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("interpolate: gamma must lie in [0, 1]");
  if (zx.rows() != zy.rows() || zx.cols() != zy.cols()) throw DimensionError("interpolate: shape mismatch");
  return interpolate_with_gate(zx, zy, sample_gate<Scalar>(zx.rows(), zx.cols(), gamma, rng));
}

}  // namespace attrgen
