#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "attrgen/attributes.hpp"
#include "attrgen/vocab.hpp"

namespace attrgen {

/// Content tokens followed by EOS. The decoder prepends BOS itself, so BOS
/// never appears in `ids`.
struct TokenSequence {
  std::vector<int> ids;

  /// Frames content ids with a trailing EOS, truncating content to max_len
  /// (0 = no limit). Throws ContractError on empty content or reserved ids.
  static TokenSequence from_content(std::span<const int> content, int max_len = 0);

  /// Length including EOS.
  int length() const { return static_cast<int>(ids.size()); }
  std::span<const int> content() const { return {ids.data(), ids.size() - 1}; }

  bool operator==(const TokenSequence&) const = default;
};

enum class Split { train, valid, test };

struct Example {
  TokenSequence tokens;
  AttributeVector labels;
};

struct LabeledCorpus {
  AttributeSchema schema;
  std::vector<Example> examples;
  Split split = Split::train;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  /// Longest sequence length, EOS included.
  int max_length() const;
};

struct LoadStats {
  std::size_t rows = 0;
  std::size_t truncated = 0;
};

/// Reads `sentence<TAB>attr=label<TAB>...` rows. Every schema attribute must be
/// labelled exactly once per row. Sentences longer than max_len content
/// tokens are truncated before EOS.
LabeledCorpus load_corpus(const std::filesystem::path& path, const AttributeSchema& schema,
                          const Vocabulary& vocab, int max_len, LoadStats* stats = nullptr);

/// Only the sentence column of a corpus file, for building a vocabulary.
std::vector<std::string> read_corpus_sentences(const std::filesystem::path& path);

void write_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus,
                  const Vocabulary& vocab);

/// Right-padded mini-batch; lengths count EOS.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<TokenSequence> sequences;
  std::vector<AttributeVector> labels;
  std::vector<int> lengths;
  int max_length = 0;

  std::size_t size() const { return sequences.size(); }
  /// Token at step t of row b, PAD past the end.
  int token(std::size_t b, int t) const {
    const auto& s = sequences[b].ids;
    return t < static_cast<int>(s.size()) ? s[static_cast<std::size_t>(t)] : Vocabulary::kPad;
  }
};

Batch make_batch(const LabeledCorpus& corpus, std::span<const std::size_t> indices);

/// One shuffled epoch of batches.
std::vector<Batch> make_batches(const LabeledCorpus& corpus, std::size_t batch_size,
                                std::uint64_t seed);

/// Endless batch source that reshuffles at every epoch boundary.
class BatchStream {
 public:
  BatchStream(const LabeledCorpus& corpus, std::size_t batch_size, std::uint64_t seed);
  Batch next();
  long epoch() const { return epoch_; }

 private:
  void reshuffle();

  const LabeledCorpus* corpus_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  long epoch_ = 0;
};

/// Word vectors read from `token v1 ... vd` lines; tokens outside the
/// vocabulary are ignored.
struct EmbeddingFile {
  int dim = 0;
  std::unordered_map<int, std::vector<double>> rows;
};

EmbeddingFile load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace attrgen
