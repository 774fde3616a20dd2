#pragma once

// Evaluation: BLEU, the CNN attribute classifier, the GRU fluency language
// model, round-trip content preservation, and the composed metric report.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrgen/corpus.hpp"
#include "attrgen/layers.hpp"

namespace attrgen {

// ---- BLEU ------------------------------------------------------------------

struct BleuOptions {
  int max_n = 4;
  /// Add one to numerator and denominator of every n >= 2 precision.
  bool smooth = true;
};

/// Sentence BLEU in [0, 100] with clipped counts and brevity penalty against
/// the closest reference length. An empty candidate scores 0.
double bleu(std::span<const int> candidate, std::span<const std::vector<int>> references,
            BleuOptions opts = {});
double bleu(const TokenSequence& candidate, const TokenSequence& reference, int max_n);

/// Corpus BLEU: statistics pooled over all pairs before combining.
double corpus_bleu(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
                   BleuOptions opts = {});

// ---- rewriting interfaces --------------------------------------------------

/// Maps sentences to sentences under per-sentence target labels.
using Rewriter = std::function<std::vector<TokenSequence>(std::span<const TokenSequence>,
                                                          std::span<const AttributeVector>)>;
/// Assigns labels to sentences; nullopt marks an undecidable sentence.
using Labeler =
    std::function<std::vector<std::optional<AttributeVector>>(std::span<const TokenSequence>)>;

// ---- attribute classifier --------------------------------------------------

struct ClassifierConfig {
  int d_emb = 32;
  int filters = 32;  // per width
  std::vector<int> widths = {3, 4, 5};
  int batch_size = 64;
  int epochs = 4;
  double lr = 2e-3;
  double gate = 0.9;
  std::uint64_t seed = 101;
};

/// Convolution over word embeddings with widths 3/4/5, max-pooled over time,
/// and one softmax head per attribute.
class AttributeClassifier {
 public:
  AttributeClassifier() = default;
  AttributeClassifier(int vocab_size, AttributeSchema schema, ClassifierConfig cfg);

  /// Per-attribute probability rows for a batch.
  std::vector<Matrix<double>> probabilities(std::span<const TokenSequence> xs);
  std::vector<AttributeVector> predict(std::span<const TokenSequence> xs);
  /// Per-attribute accuracy against gold labels.
  std::vector<double> accuracy(const LabeledCorpus& corpus);

  ParameterList<double> parameters();
  const AttributeSchema& schema() const { return schema_; }
  const ClassifierConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  double held_out_accuracy() const { return held_out_; }
  double train_accuracy() const { return train_acc_; }

  void save(const std::filesystem::path& path);
  static AttributeClassifier load(const std::filesystem::path& path);

  /// Graph on an existing tape, returning per-attribute logits.
  std::vector<Var<double>> logits(Tape<double>& tape, std::span<const TokenSequence> xs, bool trainable);

 private:
  friend AttributeClassifier train_attribute_classifier(const LabeledCorpus&, const LabeledCorpus&,
                                                        int, const ClassifierConfig&, bool);
  int vocab_size_ = 0;
  AttributeSchema schema_;
  ClassifierConfig cfg_;
  Tensor<double> embed_;
  std::vector<Linear<double>> convs_;
  std::vector<Linear<double>> heads_;
  double held_out_ = 0;
  double train_acc_ = 0;
};

/// Trains on `train` and measures `held_out`. With `enforce_gate`, throws
/// GateError when any attribute's held-out accuracy is below cfg.gate.
AttributeClassifier train_attribute_classifier(const LabeledCorpus& train, const LabeledCorpus& held_out,
                                               int vocab_size, const ClassifierConfig& cfg,
                                               bool enforce_gate = true);

Labeler classifier_labeler(AttributeClassifier& clf);

// ---- fluency language model ------------------------------------------------

struct LmConfig {
  int d_emb = 32;
  int hidden = 96;
  int batch_size = 64;
  int epochs = 4;
  double lr = 3e-3;
  std::uint64_t seed = 202;
};

class FluencyLM {
 public:
  FluencyLM() = default;
  FluencyLM(int vocab_size, LmConfig cfg);

  /// Per-sentence NLL (nats) and token counts, EOS counted, BOS excluded.
  std::vector<double> sentence_nll(std::span<const TokenSequence> xs);
  Var<double> batch_nll(Tape<double>& tape, std::span<const TokenSequence> xs, bool trainable);

  ParameterList<double> parameters();
  int vocab_size() const { return vocab_size_; }
  const LmConfig& config() const { return cfg_; }
  double held_out_perplexity() const { return held_out_ppl_; }
  void set_held_out_perplexity(double p) { held_out_ppl_ = p; }

  void save(const std::filesystem::path& path);
  static FluencyLM load(const std::filesystem::path& path);

 private:
  int vocab_size_ = 0;
  LmConfig cfg_;
  Tensor<double> embed_;
  GruCell<double> cell_;
  Linear<double> out_;
  double held_out_ppl_ = 0;
};

FluencyLM train_fluency_lm(const LabeledCorpus& train, const LabeledCorpus& held_out, int vocab_size,
                           const LmConfig& cfg);

/// exp(total NLL / total tokens); EOS counted, BOS not. Empty input raises InputError.
double fluency(std::span<const TokenSequence> xs, FluencyLM& lm);

// ---- transfer metrics ------------------------------------------------------

struct AccuracyResult {
  std::vector<double> per_attribute;
  double overall = 0;
  double decidable_rate = 1;
  std::vector<TokenSequence> outputs;
  std::vector<AttributeVector> targets;
};

/// Draws l' != l for each sentence, rewrites, and scores labels against l'.
AccuracyResult attribute_accuracy(const Rewriter& rewrite, const LabeledCorpus& corpus,
                                  const Labeler& label, std::uint64_t seed);

/// Scores already rewritten outputs against their targets.
AccuracyResult score_outputs(std::span<const TokenSequence> outputs,
                             std::span<const AttributeVector> targets, const AttributeSchema& schema,
                             const Labeler& label);

struct ContentScore {
  double bleu1 = 0;
  double bleu4 = 0;
};

struct ContentOptions {
  bool corpus_level = false;
};

/// Round-trip BLEU for attribute k, averaged over every ordered label pair
/// (a, b): sentences labelled a are mapped to b and back to a, then compared
/// with the original. Other attributes keep their own labels.
ContentScore f_content(const Rewriter& rewrite, const LabeledCorpus& corpus, int attribute,
                       ContentOptions opts = {});
/// The two-corpus form: both corpora are pooled, so argument order does not matter.
ContentScore f_content(const Rewriter& rewrite, const LabeledCorpus& src, const LabeledCorpus& tgt,
                       int attribute, ContentOptions opts = {});

struct MetricReport {
  std::vector<std::string> attribute_names;
  std::vector<double> attribute_accuracy;
  double overall_accuracy = 0;
  double decidable_rate = 1;
  std::vector<ContentScore> content;  // per attribute
  double fluency_perplexity = 0;
  double lm_held_out_perplexity = 0;
  std::size_t samples = 0;

  /// Long format `metric,attribute,value`.
  std::string to_csv() const;
  std::string to_text() const;
};

MetricReport evaluate(const Rewriter& rewrite, const LabeledCorpus& test, const Labeler& label,
                      FluencyLM& lm, std::uint64_t seed, ContentOptions opts = {});

/// Scores a pre-generated (input, output, target) set. Content uses BLEU of
/// output against input, since no round trip is available.
MetricReport evaluate_outputs(std::span<const TokenSequence> inputs,
                              std::span<const TokenSequence> outputs,
                              std::span<const AttributeVector> targets, const AttributeSchema& schema,
                              const Labeler& label, FluencyLM& lm);

}  // namespace attrgen
