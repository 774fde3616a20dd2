#include "attrgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "attrgen/errors.hpp"

namespace attrgen {

TokenSequence TokenSequence::from_content(std::span<const int> content, int max_len) {
  if (content.empty()) throw ContractError("token sequence needs at least one content token");
  std::size_t n = content.size();
  if (max_len > 0) n = std::min(n, static_cast<std::size_t>(max_len));
  TokenSequence s;
  s.ids.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    int id = content[i];
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) {
      throw ContractError("reserved id " + std::to_string(id) + " inside sequence content");
    }
    s.ids.push_back(id);
  }
  s.ids.push_back(Vocabulary::kEos);
  return s;
}

int LabeledCorpus::max_length() const {
  int m = 0;
  for (const auto& e : examples) m = std::max(m, e.tokens.length());
  return m;
}

LabeledCorpus load_corpus(const std::filesystem::path& path, const AttributeSchema& schema,
                          const Vocabulary& vocab, int max_len, LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file " + path.string());
  LabeledCorpus corpus;
  corpus.schema = schema;
  LoadStats st;
  std::string line;
  std::size_t lineno = 0;
  const std::string src = path.string();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (static_cast<int>(cols.size()) != schema.num_attributes() + 1) {
      throw ParseError(src, lineno,
                       "expected " + std::to_string(schema.num_attributes() + 1) + " columns, got " +
                           std::to_string(cols.size()));
    }
    std::vector<int> labels(static_cast<std::size_t>(schema.num_attributes()), -1);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      auto eq = cols[c].find('=');
      if (eq == std::string::npos) throw ParseError(src, lineno, "expected attr=label in column " + std::to_string(c + 1));
      std::string name = cols[c].substr(0, eq);
      std::string value = cols[c].substr(eq + 1);
      int k = schema.find_attribute(name);
      if (k < 0) throw ParseError(src, lineno, "unknown attribute '" + name + "'");
      if (labels[static_cast<std::size_t>(k)] >= 0) {
        throw ParseError(src, lineno, "attribute '" + name + "' repeated");
      }
      try {
        labels[static_cast<std::size_t>(k)] = schema.label_index(k, value);
      } catch (const SchemaError& e) {
        throw ParseError(src, lineno, e.what());
      }
    }
    std::vector<int> content = vocab.encode(cols[0]);
    if (content.empty()) throw ParseError(src, lineno, "empty sentence");
    if (max_len > 0 && static_cast<int>(content.size()) > max_len) ++st.truncated;
    corpus.examples.push_back({TokenSequence::from_content(content, max_len), AttributeVector(labels)});
    ++st.rows;
  }
  if (st.truncated > 0) {
    std::clog << "[corpus] " << src << ": truncated " << st.truncated << " of " << st.rows
              << " rows to " << max_len << " tokens\n";
  }
  if (stats) *stats = st;
  return corpus;
}

std::vector<std::string> read_corpus_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(line.substr(0, line.find('\t')));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus,
                  const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write corpus file " + path.string());
  for (const auto& e : corpus.examples) {
    out << vocab.decode(e.tokens.ids);
    for (int k = 0; k < corpus.schema.num_attributes(); ++k) {
      const auto& a = corpus.schema.attribute(k);
      out << '\t' << a.name << '=' << a.labels.at(static_cast<std::size_t>(e.labels.label(k)));
    }
    out << '\n';
  }
}

Batch make_batch(const LabeledCorpus& corpus, std::span<const std::size_t> indices) {
  Batch b;
  for (std::size_t i : indices) {
    const auto& e = corpus.examples.at(i);
    b.indices.push_back(i);
    b.sequences.push_back(e.tokens);
    b.labels.push_back(e.labels);
    b.lengths.push_back(e.tokens.length());
    b.max_length = std::max(b.max_length, e.tokens.length());
  }
  return b;
}

std::vector<Batch> make_batches(const LabeledCorpus& corpus, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::size_t e = std::min(order.size(), s + batch_size);
    out.push_back(make_batch(corpus, std::span<const std::size_t>(order.data() + s, e - s)));
  }
  return out;
}

BatchStream::BatchStream(const LabeledCorpus& corpus, std::size_t batch_size, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), rng_(seed), order_(corpus.size()) {
  if (batch_size < 1) throw ContractError("BatchStream: batch_size must be >= 1");
  if (corpus.empty()) throw InputError("BatchStream: empty corpus");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchStream::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

Batch BatchStream::next() {
  if (pos_ >= order_.size()) {
    reshuffle();
    ++epoch_;
  }
  std::size_t e = std::min(order_.size(), pos_ + batch_size_);
  Batch b = make_batch(*corpus_, std::span<const std::size_t>(order_.data() + pos_, e - pos_));
  pos_ = e;
  return b;
}

EmbeddingFile load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding file " + path.string());
  EmbeddingFile ef;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.empty()) throw ParseError(path.string(), lineno, "no vector components");
    if (ef.dim == 0) ef.dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != ef.dim) {
      throw ParseError(path.string(), lineno, "inconsistent vector dimension");
    }
    if (vocab.contains(tok)) ef.rows[vocab.id(tok)] = std::move(v);
  }
  return ef;
}

}  // namespace attrgen
