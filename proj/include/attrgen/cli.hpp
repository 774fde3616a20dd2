#pragma once

// Command-line driver: make-synth, train, generate, evaluate, ablate, pretrain.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attrgen/corpus.hpp"
#include "attrgen/synth.hpp"
#include "attrgen/trainer.hpp"

namespace attrgen {

inline constexpr const char* kToolVersion = "0.1.0";

/// A data directory as written by make-synth: schema.txt, vocab.txt and
/// train/valid/test.tsv.
struct Dataset {
  AttributeSchema schema;
  Vocabulary vocab;
  LabeledCorpus train, valid, test;
};

Dataset load_dataset(const std::filesystem::path& dir);

/// Writes corpus.tsv, schema.txt, vocab.txt and an 80/10/10 split.
void write_dataset(const std::filesystem::path& dir, const AttributeSchema& schema,
                   std::span<const SynthSentence> sentences);

/// Rows `source<TAB>target<TAB>attr=label...` where the labels describe the target.
std::vector<PairedExample> load_pairs(const std::filesystem::path& path, const AttributeSchema& schema,
                                      const Vocabulary& vocab);

/// args[0] is the program name. Exit codes: 0 success, 1 usage error, 2 runtime error.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args);

}  // namespace attrgen
