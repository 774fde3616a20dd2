#include "attrgen/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "attrgen/errors.hpp"

namespace attrgen {

namespace {

constexpr const char* kReserved[Vocabulary::kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : sentence) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReserved[i]);
    ids_.emplace(tokens_.back(), i);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> sentences, int min_count, int max_size) {
  if (sentences.empty()) throw InputError("build_vocab: empty sentence stream");
  std::map<std::string, long> counts;
  for (const auto& s : sentences) {
    for (auto& tok : tokenize(s)) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort keeps ties ordered.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> keep;
  for (auto& [tok, n] : ranked) {
    if (n < min_count) continue;
    if (max_size > 0 && static_cast<int>(keep.size()) >= max_size) break;
    keep.push_back(tok);
  }
  return from_tokens(keep);
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.ids_.count(t)) throw InputError("vocabulary: duplicate or reserved token '" + t + "'");
    v.ids_.emplace(t, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  std::vector<std::string> toks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.find_first_of(" \t") != std::string::npos) {
      throw ParseError(path.string(), lineno, "vocabulary entries must be single tokens");
    }
    toks.push_back(line);
  }
  return from_tokens(toks);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary file " + path.string());
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw IndexError("vocabulary id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view sentence) const {
  std::vector<int> ids;
  for (auto& t : tokenize(sentence)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

}  // namespace attrgen
