#pragma once

// Alternating discriminator/generator optimisation, temperature annealing,
// validation-based model selection, supervised pre-training, and the loss
// ablation grid.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "attrgen/eval.hpp"
#include "attrgen/model.hpp"
#include "attrgen/objectives.hpp"

namespace attrgen {

enum class Sampling { hard, soft };

struct TrainConfig {
  LossConfig loss = LossConfig::int_adv;
  double gamma = 0.5;
  double lambda = 1.0;
  std::vector<double> gamma_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> lambda_grid = {0.5, 1.0, 1.5};

  int d_emb = 64;
  int d_enc = 64;
  int d_dec = 96;
  int d_attr = 16;
  int d_disc = 64;
  bool bidirectional_encoder = false;
  std::string precision = "f64";

  double lr = 1e-3;
  double lr_d = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 5.0;
  int batch_size = 32;
  long max_steps = 3000;
  long valid_interval = 250;
  long warmup_steps = 1000;

  Sampling sampling = Sampling::hard;
  SampleMode sample_mode = SampleMode::greedy;
  double temperature_init = 1.0;
  double temperature_floor = 0.01;
  double temperature_decay = 0.999;

  double selection_tolerance = 0.1;
  int max_len = 0;  // 0: 1.5 x longest training sequence
  int valid_samples = 400;
  bool ignore_labels = false;  // pretrain: decoder sees a constant label
  std::uint64_t seed = 1;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  /// Canonical `key = value` text with every field.
  std::string to_string() const;
  std::uint64_t digest() const;
  static TrainConfig parse(std::string_view text, const std::string& source = "<config>");
  static TrainConfig load(const std::filesystem::path& path);
  /// Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);

  ModelConfig model_config(int vocab_size, int attr_width) const;
};

/// max(floor, init * r^step); r must lie in (0, 1).
double anneal_temperature(long step, double decay, double init = 1.0, double floor = 0.01);
inline double anneal_temperature(long step, const TrainConfig& c) {
  return anneal_temperature(step, c.temperature_decay, c.temperature_init, c.temperature_floor);
}

struct ValidationRecord {
  long step = 0;
  double content_bleu = 0;  // round-trip BLEU-1, mean over attributes
  double attribute_accuracy = 0;
  double recon_loss = 0;  // validation L^ae per sentence
  double adv_d = 0;  // mean training discriminator loss since the last record
  double adv_g = 0;
  long checkpoint = 0;  // step of the snapshot this row refers to
};

inline constexpr const char* kHistoryHeader = "step,content_bleu,attribute_accuracy,recon_loss,adv_d,adv_g";
std::string history_csv(const std::vector<ValidationRecord>& history);
void write_history(const std::filesystem::path& path, const std::vector<ValidationRecord>& history);

/// Picks the record with maximal accuracy among those whose recon loss is
/// within (1 + tolerance) of the running minimum at that point; ties go to
/// the lower recon loss. Returns -1 for an empty history.
int select_record(const std::vector<ValidationRecord>& history, double tolerance);

/// Optimiser and RNG state carried across steps.
template <typename Scalar>
struct TrainState {
  Adam<Scalar> opt_g;
  Adam<Scalar> opt_d;
  Rng rng;
  long step = 0;

  explicit TrainState(const TrainConfig& c)
      : opt_g(AdamOptions{c.lr, c.beta1, c.beta2, c.adam_eps}),
        opt_d(AdamOptions{c.lr_d, c.beta1, c.beta2, c.adam_eps}),
        rng(c.seed ^ 0x9e3779b97f4a7c15ull) {}
};

namespace detail {

template <typename Scalar>
void check_finite(const char* what, double v, long step, const LossBreakdown& b) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os << "non-finite " << what << " at step " << step << ": reconstruction=" << b.reconstruction
     << " adv_d=" << b.adv_d << " adv_g=" << b.adv_g << " grad_norm_g=" << b.grad_norm_g
     << " grad_norm_d=" << b.grad_norm_d;
  throw NumericError(os.str());
}

}  // namespace detail

/// One discriminator update on detached traces, then one generator update.
/// Adversarial phases are skipped when the configuration has no L^adv or the
/// step is still inside the warm-up.
template <typename Scalar>
LossBreakdown train_step(const Batch& batch, TransferModel<Scalar>& m, TrainState<Scalar>& st,
                         const TrainConfig& cfg) {
  LossBreakdown out;
  out.config = cfg.loss;
  out.lambda = cfg.lambda;
  const long step = st.step;
  const auto& schema = m.schema;
  std::span<const TokenSequence> xs(batch.sequences);
  std::span<const AttributeVector> ls(batch.labels);
  const bool adversarial = uses_adversarial(cfg.loss) && step >= cfg.warmup_steps;
  out.adversarial_active = adversarial;

  std::vector<AttributeVector> targets;
  targets.reserve(batch.size());
  for (const auto& l : batch.labels) targets.push_back(sample_mismatched_labels(l, schema, st.rng));

  SamplingOptions so;
  so.soft = cfg.sampling == Sampling::soft;
  so.mode = cfg.sample_mode;
  so.temperature = anneal_temperature(step, cfg);
  so.max_len = m.max_len;

  auto gen_params = m.gen.parameters();
  auto disc_params = m.disc.parameters();

  Tape<Scalar> tape;
  auto g = m.gen.on(tape, true);
  Var<Scalar> rec;
  std::optional<Transfer<Scalar>> y;
  std::vector<Var<Scalar>> hx_states;
  if (uses_interpolation(cfg.loss)) {
    auto li = loss_int(g, xs, ls, targets, cfg.gamma, schema, so, st.rng);
    rec = li.loss;
    y = std::move(li.y);
    if (adversarial) {
      Tape<Scalar> side;
      auto gf = m.gen.on(side, false);
      auto tf = gf.teacher_forced(xs, gf.encode(xs), ls, schema);
      for (const auto& s : tf.states) hx_states.push_back(tape.constant(s.value()));
    }
  } else {
    auto zx = g.encode(xs);
    auto r = reconstruct(g, xs, zx, ls, schema);
    rec = r.loss;
    if (adversarial) hx_states = r.trace.states;
    if (needs_samples(cfg.loss)) {
      y = transfer(g, zx, targets, schema, so, st.rng);
      if (uses_backtranslation(cfg.loss)) {
        // y is treated as fixed input; the gradient reaches the encoder via z_y
        auto bt = reconstruct(g, xs, g.encode(y->ys), ls, schema);
        rec = add(rec, bt.loss);
      }
    }
  }
  out.reconstruction = static_cast<double>(rec.value()(0, 0));
  detail::check_finite<Scalar>("reconstruction loss", out.reconstruction, step, out);

  std::optional<Var<Scalar>> adv_g;
  if (adversarial) {
    {
      Tape<Scalar> dt;
      auto d = m.disc.on(dt, true);
      auto hx = detach_states(dt, std::span<const Var<Scalar>>(hx_states));
      auto hy = detach_states(dt, std::span<const Var<Scalar>>(y->trace.states));
      auto ld = loss_adv_d(d, std::span<const Var<Scalar>>(hx), std::span<const int>(batch.lengths),
                           std::span<const Var<Scalar>>(hy), std::span<const int>(y->trace.lengths), ls,
                           std::span<const AttributeVector>(targets), schema);
      out.adv_d = static_cast<double>(ld.value()(0, 0));
      detail::check_finite<Scalar>("discriminator loss", out.adv_d, step, out);
      zero_grad(disc_params);
      dt.backward(ld);
      out.grad_norm_d = static_cast<double>(clip_grad_norm(disc_params, static_cast<Scalar>(cfg.clip)));
      detail::check_finite<Scalar>("discriminator gradient norm", out.grad_norm_d, step, out);
      st.opt_d.step(disc_params);
    }
    auto d = m.disc.on(tape, false);
    adv_g = loss_adv_g(d, std::span<const Var<Scalar>>(y->trace.states), std::span<const int>(y->trace.lengths),
                       std::span<const AttributeVector>(targets), schema);
    out.adv_g = static_cast<double>(adv_g->value()(0, 0));
    detail::check_finite<Scalar>("adversarial generator loss", out.adv_g, step, out);
  }
  auto total = total_generator_loss(rec, adv_g, cfg.lambda);
  out.total_g = static_cast<double>(total.value()(0, 0));
  zero_grad(gen_params);
  tape.backward(total);
  out.grad_norm_g = static_cast<double>(clip_grad_norm(gen_params, static_cast<Scalar>(cfg.clip)));
  detail::check_finite<Scalar>("generator gradient norm", out.grad_norm_g, step, out);
  st.opt_g.step(gen_params);
  ++st.step;
  return out;
}

/// Mean per-sentence -log p(x | z_x, l) with frozen parameters.
template <typename Scalar>
double validation_recon(TransferModel<Scalar>& m, const LabeledCorpus& corpus, std::size_t chunk = 128) {
  if (corpus.empty()) throw InputError("validation: empty corpus");
  double total = 0;
  for (std::size_t s = 0; s < corpus.size(); s += chunk) {
    std::vector<TokenSequence> xs;
    std::vector<AttributeVector> ls;
    for (std::size_t i = s; i < std::min(corpus.size(), s + chunk); ++i) {
      xs.push_back(corpus.examples[i].tokens);
      ls.push_back(corpus.examples[i].labels);
    }
    Tape<Scalar> tape;
    auto g = m.gen.on(tape, false);
    auto tf = g.teacher_forced(xs, g.encode(xs), ls, m.schema);
    total += static_cast<double>(g.sequence_nll(tf).value()(0, 0));
  }
  return total / static_cast<double>(corpus.size());
}

template <typename Scalar>
Rewriter model_rewriter(TransferModel<Scalar>& m, SampleMode mode = SampleMode::greedy, std::uint64_t seed = 0) {
  return [&m, mode, seed](std::span<const TokenSequence> xs, std::span<const AttributeVector> ls) {
    return m.rewrite(xs, ls, mode, seed);
  };
}

/// The first n examples (all when n <= 0 or n exceeds the size).
LabeledCorpus head(const LabeledCorpus& c, int n);

template <typename Scalar>
ValidationRecord validate_model(TransferModel<Scalar>& m, const LabeledCorpus& valid, const Labeler& label,
                                std::uint64_t seed) {
  ValidationRecord r;
  auto rw = model_rewriter(m);
  r.recon_loss = validation_recon(m, valid);
  r.attribute_accuracy = attribute_accuracy(rw, valid, label, seed).overall;
  double b = 0;
  for (int k = 0; k < valid.schema.num_attributes(); ++k) b += f_content(rw, valid, k).bleu1;
  r.content_bleu = b / valid.schema.num_attributes();
  return r;
}

template <typename Scalar>
using Snapshot = std::vector<Matrix<Scalar>>;

template <typename Scalar>
Snapshot<Scalar> snapshot(TransferModel<Scalar>& m) {
  Snapshot<Scalar> s;
  for (auto& [name, t] : m.parameters()) s.push_back(t->value());
  return s;
}

template <typename Scalar>
void restore(TransferModel<Scalar>& m, const Snapshot<Scalar>& s) {
  auto p = m.parameters();
  if (p.size() != s.size()) throw ContractError("restore: snapshot does not match the model");
  for (std::size_t i = 0; i < p.size(); ++i) p[i].second->value() = s[i];
}

struct FitResult {
  std::vector<ValidationRecord> history;
  long best_step = 0;
  double best_accuracy = 0;
  double seconds = 0;
  std::vector<LossBreakdown> trace;  // first and last training steps
};

/// Model from config with the vocabulary and schema of the training data.
template <typename Scalar>
TransferModel<Scalar> make_model(const TrainConfig& cfg, const Vocabulary& vocab, const LabeledCorpus& train) {
  cfg.validate();
  int max_len = cfg.max_len > 0 ? cfg.max_len : default_max_len(train.max_length());
  TransferModel<Scalar> m(cfg.model_config(vocab.size(), train.schema.width()), vocab, train.schema, max_len);
  m.init(cfg.seed);
  return m;
}

using Progress = std::function<void(const ValidationRecord&)>;

/// Trains for cfg.max_steps, validating every cfg.valid_interval steps, and
/// leaves the selected snapshot loaded in the model.
template <typename Scalar>
FitResult fit(TransferModel<Scalar>& m, const LabeledCorpus& train, const LabeledCorpus& valid,
              const TrainConfig& cfg, const Labeler& label, const Progress& progress = {}) {
  cfg.validate();
  if (!label) throw ConfigError("fit: a validation classifier is required");
  if (train.empty() || valid.empty()) throw InputError("fit: empty training or validation split");
  auto t0 = std::chrono::steady_clock::now();
  FitResult res;
  TrainState<Scalar> st(cfg);
  BatchStream stream(train, static_cast<std::size_t>(cfg.batch_size), cfg.seed);
  auto vset = head(valid, cfg.valid_samples);
  Snapshot<Scalar> best = snapshot(m);
  double running_min = std::numeric_limits<double>::infinity();
  double best_acc = -1;
  double best_recon = std::numeric_limits<double>::infinity();
  double sum_d = 0, sum_g = 0;
  long n_adv = 0;
  for (long s = 1; s <= cfg.max_steps; ++s) {
    auto b = train_step(stream.next(), m, st, cfg);
    if (b.adversarial_active) {
      sum_d += b.adv_d;
      sum_g += b.adv_g;
      ++n_adv;
    }
    if (s <= 3 || s == cfg.max_steps) res.trace.push_back(b);
    if (s % cfg.valid_interval == 0) {
      auto r = validate_model(m, vset, label, cfg.seed + 17);
      r.step = s;
      r.adv_d = n_adv ? sum_d / static_cast<double>(n_adv) : 0.0;
      r.adv_g = n_adv ? sum_g / static_cast<double>(n_adv) : 0.0;
      sum_d = sum_g = 0;
      n_adv = 0;
      running_min = std::min(running_min, r.recon_loss);
      bool eligible = r.recon_loss <= (1.0 + cfg.selection_tolerance) * running_min;
      bool better = r.attribute_accuracy > best_acc ||
                    (r.attribute_accuracy == best_acc && r.recon_loss < best_recon);
      if (eligible && better) {
        best_recon = r.recon_loss;
        best_acc = r.attribute_accuracy;
        best = snapshot(m);
        res.best_step = s;
      }
      r.checkpoint = res.best_step;
      res.history.push_back(r);
      if (progress) progress(r);
    }
  }
  restore(m, best);
  res.best_accuracy = std::max(best_acc, 0.0);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

struct PairedExample {
  TokenSequence source;
  TokenSequence target;
  AttributeVector target_labels;
};

struct PretrainResult {
  double first_loss = 0;
  double final_loss = 0;
  long steps = 0;
};

/// Teacher-forced NLL of the target given (encode(source), target labels).
/// With cfg.ignore_labels the decoder is given label 0 for every attribute.
template <typename Scalar>
PretrainResult pretrain_supervised(std::span<const PairedExample> pairs, TransferModel<Scalar>& m,
                                   const TrainConfig& cfg, long steps) {
  if (pairs.empty()) throw InputError("pretrain: empty paired set");
  cfg.validate();
  Adam<Scalar> opt(AdamOptions{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  Rng rng(cfg.seed ^ 0x5bd1e995ull);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t pos = order.size();
  auto params = m.gen.parameters();
  const AttributeVector constant(std::vector<int>(static_cast<std::size_t>(m.schema.num_attributes()), 0));
  PretrainResult res;
  double window = 0;
  long in_window = 0;
  for (long s = 0; s < steps; ++s) {
    std::vector<TokenSequence> src, tgt;
    std::vector<AttributeVector> ls;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (pos == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      const auto& p = pairs[order[pos++]];
      src.push_back(p.source);
      tgt.push_back(p.target);
      ls.push_back(cfg.ignore_labels ? constant : p.target_labels);
    }
    Tape<Scalar> tape;
    auto g = m.gen.on(tape, true);
    auto r = reconstruct(g, std::span<const TokenSequence>(tgt), g.encode(src), std::span<const AttributeVector>(ls),
                         m.schema);
    double v = static_cast<double>(r.loss.value()(0, 0));
    if (!std::isfinite(v)) throw NumericError("pretrain: non-finite loss at step " + std::to_string(s));
    if (s == 0) res.first_loss = v;
    window += v;
    ++in_window;
    if (in_window > 50) {
      window = v;
      in_window = 1;
    }
    zero_grad(params);
    tape.backward(r.loss);
    clip_grad_norm(params, static_cast<Scalar>(cfg.clip));
    opt.step(params);
  }
  res.final_loss = in_window ? window / static_cast<double>(in_window) : 0.0;
  res.steps = steps;
  return res;
}

struct AblationRun {
  LossConfig config;
  FitResult fit;
  std::filesystem::path csv;
};

/// Trains every configuration in `configs` from the same initialisation and
/// data order, writing `history_<name>.csv` under out_dir.
template <typename Scalar>
std::vector<AblationRun> run_ablation_grid(const Vocabulary& vocab, const LabeledCorpus& train,
                                           const LabeledCorpus& valid, const TrainConfig& base,
                                           const Labeler& label, const std::filesystem::path& out_dir,
                                           std::span<const LossConfig> configs = kAllLossConfigs) {
  base.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<AblationRun> runs;
  for (auto c : configs) {
    TrainConfig cfg = base;
    cfg.loss = c;
    auto m = make_model<Scalar>(cfg, vocab, train);
    AblationRun r{c, fit(m, train, valid, cfg, label), out_dir / ("history_" + to_string(c) + ".csv")};
    write_history(r.csv, r.fit.history);
    runs.push_back(std::move(r));
  }
  return runs;
}

}  // namespace attrgen
