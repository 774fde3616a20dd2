#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "attrgen/attributes.hpp"
#include "attrgen/corpus.hpp"
#include "attrgen/errors.hpp"
#include "attrgen/synth.hpp"
#include "attrgen/vocab.hpp"

using namespace attrgen;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  auto dir = fs::temp_directory_path() / "attrgen_text_data";
  fs::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

AttributeSchema sentiment_schema() { return AttributeSchema({{"sentiment", {"negative", "positive"}}}); }

}  // namespace

TEST_CASE("vocabulary is frequency ranked with reserved ids first") {
  std::vector<std::string> s{"a b", "a"};
  auto v = Vocabulary::build(s);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.id("zzz") == Vocabulary::kUnk);

  auto v2 = Vocabulary::build(s, 2);
  CHECK(v2.size() == 5);
  CHECK(v2.encode("b a") == std::vector<int>{Vocabulary::kUnk, 4});

  std::vector<std::string> ties{"d c", "c d"};
  auto v3 = Vocabulary::build(ties);
  CHECK(v3.id("c") < v3.id("d"));

  CHECK(Vocabulary::build(s, 1, 1).size() == 5);
  CHECK_THROWS_AS(Vocabulary::build(std::vector<std::string>{}), InputError);
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  CHECK(tokenize("  The  CAT\tsat ") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize("").empty());
}

TEST_CASE("vocabulary size equals distinct tokens plus reserved on a synthetic corpus") {
  auto g = TemplateGrammar::sentiment();
  auto sents = g.generate(10000, 3);
  std::set<std::string> distinct;
  for (const auto& s : sents) distinct.insert(s.tokens.begin(), s.tokens.end());
  auto v = Vocabulary::build(sentence_texts(sents));
  CHECK(v.size() == static_cast<int>(distinct.size()) + Vocabulary::kNumReserved);
}

TEST_CASE("encode and decode round trip") {
  auto v = Vocabulary::build(std::vector<std::string>{"the food was good", "the place was bad"});
  auto ids = v.encode("the food was bad");
  CHECK(v.decode(ids) == "the food was bad");
  auto seq = TokenSequence::from_content(ids);
  CHECK(seq.ids.back() == Vocabulary::kEos);
  CHECK(v.decode(seq.ids) == "the food was bad");

  auto dir = fs::temp_directory_path() / "attrgen_text_data";
  fs::create_directories(dir);
  v.save(dir / "vocab.txt");
  auto w = Vocabulary::load(dir / "vocab.txt");
  CHECK(std::vector<std::string>(w.tokens().begin(), w.tokens().end()) ==
        std::vector<std::string>(v.tokens().begin(), v.tokens().end()));
}

TEST_CASE("token sequences are framed with EOS and truncated") {
  std::vector<int> c{5, 6, 7};
  auto s = TokenSequence::from_content(c, 2);
  CHECK(s.ids == std::vector<int>{5, 6, Vocabulary::kEos});
  CHECK(s.length() == 3);
  CHECK_THROWS_AS(TokenSequence::from_content(std::vector<int>{}), ContractError);
  CHECK_THROWS_AS(TokenSequence::from_content(std::vector<int>{Vocabulary::kBos}), ContractError);
}

TEST_CASE("attribute vectors concatenate one-hot blocks") {
  auto s = sentiment_schema();
  std::vector<std::string> pos{"positive"};
  CHECK(encode_attributes(pos, s).one_hot(s) == std::vector<int>{0, 1});

  AttributeSchema two({{"tense", {"past", "present", "future"}}, {"negation", {"no", "yes"}}});
  std::vector<std::string> fn{"future", "no"};
  auto v = encode_attributes(fn, two);
  CHECK(v.one_hot(two) == std::vector<int>{0, 0, 1, 1, 0});
  CHECK(from_one_hot(v.one_hot(two), two) == v);
  CHECK(decode_attributes(v, two) == fn);
  CHECK(AttributeVector::from_combination_index(v.combination_index(two), two) == v);

  std::vector<std::string> bad{"sideways"};
  CHECK_THROWS_AS(encode_attributes(bad, s), SchemaError);
  CHECK_THROWS_AS(from_one_hot(std::vector<int>{1, 1}, s), SchemaError);
}

TEST_CASE("every attribute vector round trips through one-hot and text") {
  AttributeSchema s({{"tense", {"past", "present", "future"}}, {"person", {"first", "third"}},
                     {"polite", {"no", "yes"}}});
  for (std::int64_t i = 0; i < s.num_combinations(); ++i) {
    auto v = AttributeVector::from_combination_index(i, s);
    CHECK(from_one_hot(v.one_hot(s), s) == v);
    CHECK(parse_label_assignment(format_label_assignment(v, s), s) == v);
  }
}

TEST_CASE("schema text round trip and validation") {
  AttributeSchema s({{"tense", {"past", "present"}}, {"mood", {"calm", "angry", "sad"}}});
  CHECK(AttributeSchema::parse(s.to_string()) == s);
  CHECK(s.width() == 5);
  CHECK(s.offset(1) == 2);
  CHECK_THROWS_AS(AttributeSchema(std::vector<Attribute>{{"x", {"only"}}}), SchemaError);
}

TEST_CASE("partial label assignments fall back to given labels") {
  AttributeSchema s({{"tense", {"past", "present"}}, {"mood", {"calm", "angry"}}});
  AttributeVector base(std::vector<int>{1, 0});
  auto v = parse_label_assignment("mood=angry", s, &base);
  CHECK(v == AttributeVector(std::vector<int>{1, 1}));
  CHECK_THROWS_AS(parse_label_assignment("mood=angry", s), SchemaError);
  CHECK_THROWS_AS(parse_label_assignment("colour=red", s, &base), SchemaError);
}

TEST_CASE("mismatched labels") {
  Rng rng(1);
  auto s = sentiment_schema();
  AttributeVector pos(std::vector<int>{1});
  for (int i = 0; i < 20; ++i) CHECK(sample_mismatched_labels(pos, s, rng) == AttributeVector(std::vector<int>{0}));

  AttributeSchema three({{"k", {"a", "b", "c"}}});
  AttributeVector a(std::vector<int>{0});
  std::map<int, int> counts;
  for (int i = 0; i < 10000; ++i) ++counts[sample_mismatched_labels(a, three, rng).label(0)];
  CHECK(counts[0] == 0);
  CHECK(counts[1] / 10000.0 == doctest::Approx(0.5).epsilon(0.06));
  CHECK(counts[2] / 10000.0 == doctest::Approx(0.5).epsilon(0.06));

  AttributeSchema two({{"x", {"a", "b"}}, {"y", {"c", "d"}}});
  AttributeVector l(std::vector<int>{1, 0});
  std::set<std::int64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    auto lp = sample_mismatched_labels(l, two, rng);
    CHECK_FALSE(lp == l);
    seen.insert(lp.combination_index(two));
  }
  CHECK(seen.size() == 3);
}

TEST_CASE("load_corpus reads labelled rows and reports bad lines") {
  auto s = sentiment_schema();
  auto v = Vocabulary::build(std::vector<std::string>{"the food was good", "the food was bad"});
  auto ok = temp_file("ok.tsv", "the food was good\tsentiment=positive\nthe food was bad\tsentiment=negative\n"
                                "the food was the food was good\tsentiment=positive\n");
  LoadStats st;
  auto c = load_corpus(ok, s, v, 4, &st);
  CHECK(c.size() == 3);
  CHECK(st.truncated == 1);
  CHECK(c.examples[2].tokens.length() == 5);
  CHECK(c.examples[1].labels.label(0) == 0);

  auto bad = temp_file("bad.tsv", "the food was good\tsentiment=positive\nthe food\tsentiment=sideways\n");
  try {
    load_corpus(bad, s, v, 0);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  auto cols = temp_file("cols.tsv", "the food was good\n");
  CHECK_THROWS_AS(load_corpus(cols, s, v, 0), ParseError);
}

TEST_CASE("loaded synthetic corpus carries the generator's labels") {
  auto g = TemplateGrammar::sentiment();
  auto sents = g.generate(5000, 12);
  auto dir = fs::temp_directory_path() / "attrgen_text_data" / "synth";
  write_synth(dir, g.schema(), sents);
  auto v = Vocabulary::build(read_corpus_sentences(dir / "corpus.tsv"));
  auto c = load_corpus(dir / "corpus.tsv", AttributeSchema::load(dir / "schema.txt"), v, 0);
  REQUIRE(c.size() == sents.size());
  std::size_t same = 0;
  for (std::size_t i = 0; i < sents.size(); ++i) {
    if (c.examples[i].labels == sents[i].labels && v.decode(c.examples[i].tokens.ids) == sents[i].text()) ++same;
  }
  CHECK(same == sents.size());
}

TEST_CASE("batches cover the corpus deterministically") {
  LabeledCorpus c;
  c.schema = sentiment_schema();
  for (int i = 0; i < 10; ++i) {
    std::vector<int> ids(static_cast<std::size_t>(1 + i % 3), 4 + i);
    c.examples.push_back({TokenSequence::from_content(ids), AttributeVector(std::vector<int>{i % 2})});
  }
  auto b = make_batches(c, 4, 9);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  std::set<std::size_t> all;
  for (const auto& x : b) all.insert(x.indices.begin(), x.indices.end());
  CHECK(all.size() == 10);
  auto again = make_batches(c, 4, 9);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i].indices == again[i].indices);
  for (const auto& x : b) {
    for (std::size_t r = 0; r < x.size(); ++r) {
      CHECK(x.lengths[r] == x.sequences[r].length());
      CHECK(x.token(r, x.max_length) == Vocabulary::kPad);
    }
  }

  BatchStream stream(c, 4, 9);
  for (int i = 0; i < 3; ++i) CHECK(stream.next().indices == b[static_cast<std::size_t>(i)].indices);
  stream.next();
  CHECK(stream.epoch() >= 1);
}
