#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "attrgen/errors.hpp"
#include "attrgen/synth.hpp"

using namespace attrgen;

namespace {

std::vector<TemplateGrammar> all_grammars() {
  return {TemplateGrammar::sentiment(), TemplateGrammar::four_attribute(), TemplateGrammar::diglossia()};
}

}  // namespace

TEST_CASE("generated sentences carry their oracle label") {
  for (const auto& g : all_grammars()) {
    CAPTURE(g.name());
    for (const auto& s : g.generate(2000, 3)) {
      auto l = g.oracle_label(s.tokens);
      REQUIRE(l.has_value());
      CHECK(*l == s.labels);
      int attr_tokens = 0;
      for (const auto& t : s.tokens) attr_tokens += g.is_attribute_token(t);
      CHECK(attr_tokens <= 2 * g.schema().num_attributes());
    }
  }
}

TEST_CASE("rule transfer agrees with the oracle for every target") {
  for (const auto& g : all_grammars()) {
    CAPTURE(g.name());
    const auto& schema = g.schema();
    for (const auto& s : g.generate(300, 5)) {
      for (std::int64_t c = 0; c < schema.num_combinations(); ++c) {
        auto target = AttributeVector::from_combination_index(c, schema);
        auto y = g.rule_transfer(s.tokens, target);
        auto l = g.oracle_label(y);
        REQUIRE(l.has_value());
        CHECK(*l == target);
        CHECK(y.size() == s.tokens.size());
        CHECK(g.rule_transfer(y, s.labels) == s.tokens);
      }
      CHECK(g.rule_transfer(s.tokens, s.labels) == s.tokens);
    }
  }
}

TEST_CASE("rule transfer edits only attribute tokens") {
  auto g = TemplateGrammar::sentiment();
  for (const auto& s : g.generate(500, 6)) {
    AttributeVector flip(std::vector<int>{1 - s.labels.label(0)});
    auto y = g.rule_transfer(s.tokens, flip);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (!g.is_attribute_token(s.tokens[i])) CHECK(y[i] == s.tokens[i]);
  }
}

TEST_CASE("classes are balanced and vocabularies stay small") {
  for (const auto& g : all_grammars()) {
    CAPTURE(g.name());
    const auto& schema = g.schema();
    auto sents = g.generate(10000, 11);
    for (int k = 0; k < schema.num_attributes(); ++k) {
      std::vector<int> counts(static_cast<std::size_t>(schema.attribute(k).labels.size()), 0);
      for (const auto& s : sents) ++counts[static_cast<std::size_t>(s.labels.label(k))];
      double expected = 10000.0 / static_cast<double>(counts.size());
      for (int c : counts) CHECK(std::abs(c - expected) <= 0.05 * expected);
    }
    std::set<std::string> seen;
    for (const auto& s : sents) seen.insert(s.tokens.begin(), s.tokens.end());
    CHECK(seen.size() <= 2000);
    for (const auto& t : seen) CHECK(g.vocabulary().count(t) == 1);
  }
}

TEST_CASE("mixed or missing evidence is undecidable") {
  auto g = TemplateGrammar::sentiment();
  Rng rng(2);
  auto pos = g.sample(AttributeVector(std::vector<int>{1}), rng);
  auto neg = g.rule_transfer(pos.tokens, AttributeVector(std::vector<int>{0}));
  std::vector<std::string> mixed = pos.tokens;
  for (std::size_t i = 0; i < mixed.size(); ++i)
    if (g.is_attribute_token(mixed[i])) {
      mixed.push_back(neg[i]);
      break;
    }
  CHECK_FALSE(g.oracle_label(mixed).has_value());
  std::vector<std::string> none;
  for (const auto& t : pos.tokens)
    if (!g.is_attribute_token(t)) none.push_back(t);
  CHECK_FALSE(g.oracle_label(none).has_value());
}

TEST_CASE("non-grammar input is rejected by rule transfer") {
  auto g = TemplateGrammar::sentiment();
  CHECK_THROWS_AS(g.rule_transfer("zebra quantum flux", AttributeVector(std::vector<int>{0})), ContractError);
}

TEST_CASE("same seed gives the same corpus") {
  auto g = TemplateGrammar::four_attribute();
  auto a = g.generate(500, 42);
  auto b = g.generate(500, 42);
  auto c = g.generate(500, 43);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].labels == b[i].labels);
  }
  CHECK(sentence_texts(a) != sentence_texts(c));
}

TEST_CASE("grammar lookup by name") {
  CHECK(TemplateGrammar::by_name("sentiment").schema().num_attributes() == 1);
  CHECK(TemplateGrammar::by_name("multi").schema().num_attributes() == 4);
  CHECK(TemplateGrammar::by_name("four_attribute").schema().num_attributes() == 4);
  CHECK(TemplateGrammar::by_name("diglossia").schema().num_attributes() == 1);
  CHECK_THROWS(TemplateGrammar::by_name("klingon"));
  CHECK(TemplateGrammar::sentiment().entropy_perplexity() > 1.0);
}
