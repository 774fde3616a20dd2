#pragma once

// Template grammars with index-aligned attribute lexicons. Every sentence
// carries exact labels, and the lexicons double as a label oracle and a
// rule-based rewriter.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attrgen/attributes.hpp"
#include "attrgen/corpus.hpp"
#include "attrgen/eval.hpp"

namespace attrgen {

struct SynthSentence {
  std::vector<std::string> tokens;
  AttributeVector labels;

  std::string text() const;
};

class TemplateGrammar {
 public:
  enum class SlotKind { literal, content, attribute };

  /// A literal word, a uniform choice from `words`, or an attribute slot.
  /// Attribute slots pick an entry uniformly; `entries[e][c]` is the surface
  /// form for combination c of the labels of `attrs` (mixed radix, first
  /// listed attribute most significant).
  struct Slot {
    SlotKind kind = SlotKind::literal;
    std::vector<std::string> words;
    std::vector<int> attrs;
    std::vector<std::vector<std::string>> entries;
  };

  TemplateGrammar(std::string name, AttributeSchema schema, std::vector<Slot> slots,
                  std::vector<std::vector<int>> templates);

  static TemplateGrammar sentiment();
  static TemplateGrammar four_attribute();
  static TemplateGrammar diglossia();
  /// "sentiment", "multi" (alias "four_attribute") or "diglossia".
  static TemplateGrammar by_name(const std::string& name);

  const std::string& name() const { return name_; }
  const AttributeSchema& schema() const { return schema_; }
  std::size_t num_templates() const { return templates_.size(); }

  SynthSentence sample(const AttributeVector& labels, Rng& rng) const;
  SynthSentence sample(Rng& rng) const;
  /// n sentences with uniformly drawn labels.
  std::vector<SynthSentence> generate(int n, std::uint64_t seed) const;

  /// Labels read off attribute-bearing tokens, or nullopt when some attribute
  /// has no evidence or conflicting evidence.
  std::optional<AttributeVector> oracle_label(std::span<const std::string> tokens) const;
  std::optional<AttributeVector> oracle_label(const std::string& sentence) const;

  /// Swaps every attribute-bearing token for its aligned form under `target`.
  std::vector<std::string> rule_transfer(std::span<const std::string> tokens,
                                         const AttributeVector& target) const;
  std::string rule_transfer(const std::string& sentence, const AttributeVector& target) const;

  bool is_attribute_token(const std::string& token) const { return attr_tokens_.count(token) > 0; }

  std::set<std::string> vocabulary() const;

  /// Per-token perplexity of the generating distribution, EOS counted:
  /// exp(H(sentence) / E[length + 1]).
  double entropy_perplexity() const;

 private:
  struct TokenInfo {
    int slot = -1;
    int entry = -1;
    std::vector<int> votes;  // per attribute: determined label or -1
  };

  int combination(const Slot& s, const AttributeVector& labels) const;
  void index_tokens();
  void validate() const;

  std::string name_;
  AttributeSchema schema_;
  std::vector<Slot> slots_;
  std::vector<std::vector<int>> templates_;
  std::map<std::string, TokenInfo> attr_tokens_;
  std::set<std::string> content_tokens_;
};

/// Corpus encoded with `vocab`; content longer than max_len is truncated.
LabeledCorpus to_corpus(std::span<const SynthSentence> sentences, const AttributeSchema& schema,
                        const Vocabulary& vocab, int max_len = 0);

std::vector<std::string> sentence_texts(std::span<const SynthSentence> sentences);

/// Writes `corpus.tsv` and `schema.txt` under dir.
void write_synth(const std::filesystem::path& dir, const AttributeSchema& schema,
                 std::span<const SynthSentence> sentences);

/// Exact labels by lexicon membership, through the vocabulary.
Labeler grammar_labeler(const TemplateGrammar& grammar, const Vocabulary& vocab);
/// The aligned-lexicon rewrite as a Rewriter; inputs must be grammar sentences.
Rewriter rule_rewriter(const TemplateGrammar& grammar, const Vocabulary& vocab);

}  // namespace attrgen
