#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attrgen {

/// Lowercases ASCII letters and splits on whitespace.
std::vector<std::string> tokenize(std::string_view sentence);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();

  /// Frequency-ranked vocabulary, ties broken lexicographically. Tokens seen
  /// fewer than min_count times are dropped; max_size caps the number of
  /// non-reserved entries (0 means unlimited).
  static Vocabulary build(std::span<const std::string> sentences, int min_count = 1,
                          int max_size = 0);

  /// Non-reserved tokens in rank order.
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(std::string_view token) const;
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  /// Tokenizes and maps to ids, without framing.
  std::vector<int> encode(std::string_view sentence) const;
  /// Joins tokens up to (excluding) the first EOS; PAD and BOS are skipped.
  std::string decode(std::span<const int> ids) const;

  std::span<const std::string> tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace attrgen
