#include "attrgen/synth.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "attrgen/errors.hpp"
#include "attrgen/vocab.hpp"

namespace attrgen {

namespace {

std::vector<std::string> words(std::string_view text) { return tokenize(text); }

using Slot = TemplateGrammar::Slot;
using Kind = TemplateGrammar::SlotKind;

Slot literal(std::string w) { return {Kind::literal, {std::move(w)}, {}, {}}; }
Slot content(std::string_view list) {
  Slot s{Kind::content, {}, {}, {}};
  std::set<std::string> seen;
  for (auto& w : words(list)) {
    if (seen.insert(w).second) s.words.push_back(std::move(w));
  }
  return s;
}

/// Attribute slot over a single attribute from parallel word lists, one list
/// per label, aligned by position.
Slot aligned(int attr, std::vector<std::string_view> per_label) {
  Slot s{Kind::attribute, {}, {attr}, {}};
  std::vector<std::vector<std::string>> cols;
  for (auto l : per_label) cols.push_back(words(l));
  for (std::size_t e = 0; e < cols.front().size(); ++e) {
    std::vector<std::string> entry;
    for (const auto& c : cols) {
      if (c.size() != cols.front().size()) throw ContractError("aligned lexicon lists differ in size");
      entry.push_back(c[e]);
    }
    s.entries.push_back(std::move(entry));
  }
  return s;
}

// Content lexicons shared by several grammars.
constexpr std::string_view kFoods =
    "pizza pasta burger salad soup steak sandwich coffee tea cake pie bread rice noodles "
    "chicken fish shrimp tacos curry sushi dessert breakfast lunch dinner wine beer juice "
    "omelette pancakes waffles fries cheese yogurt bagel muffin cookie donut stew chili "
    "lasagna risotto dumplings ramen burrito salmon tuna lobster crab oysters";
constexpr std::string_view kThings =
    "room bed bathroom shower towel carpet window door view lobby elevator pool gym parking "
    "menu table chair booth patio bar counter kitchen music lighting decor floor wall "
    "price bill receipt order delivery reservation phone website app checkout line queue "
    "book movie song album show game phone laptop camera headset charger screen keyboard "
    "shirt jacket shoes bag hat dress sofa lamp mattress blender kettle oven toaster";
constexpr std::string_view kPlaces =
    "restaurant hotel cafe bakery diner bistro pub store shop market mall salon spa clinic "
    "theater cinema museum library studio garage office bank hostel motel inn resort "
    "pharmacy bookstore boutique gallery arcade stadium park station airport";
constexpr std::string_view kPeople =
    "waiter waitress manager owner chef cook host hostess bartender cashier clerk driver "
    "server staff receptionist barista doctor nurse stylist mechanic teacher guide agent "
    "friend sister brother mother father wife husband son daughter boss neighbor cousin "
    "uncle aunt roommate partner colleague grandmother grandfather";
constexpr std::string_view kColors =
    "red blue green small large big little old warm cold hot spicy sweet sour salty "
    "round square tall short wide narrow dark bright quiet loud busy empty crowded "
    "simple plain fancy huge tiny";
constexpr std::string_view kTimes =
    "yesterday today tonight recently again once twice monday tuesday wednesday thursday "
    "friday saturday sunday earlier lately";
constexpr std::string_view kIntens = "really very quite so truly pretty rather";

}  // namespace

std::string SynthSentence::text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

TemplateGrammar::TemplateGrammar(std::string name, AttributeSchema schema, std::vector<Slot> slots,
                                 std::vector<std::vector<int>> templates)
    : name_(std::move(name)),
      schema_(std::move(schema)),
      slots_(std::move(slots)),
      templates_(std::move(templates)) {
  index_tokens();
  validate();
}

int TemplateGrammar::combination(const Slot& s, const AttributeVector& labels) const {
  int c = 0;
  for (int a : s.attrs) c = c * schema_.num_labels(a) + labels.label(a);
  return c;
}

void TemplateGrammar::index_tokens() {
  const int k = schema_.num_attributes();
  for (std::size_t si = 0; si < slots_.size(); ++si) {
    const Slot& s = slots_[si];
    if (s.kind != SlotKind::attribute) {
      for (const auto& w : s.words) content_tokens_.insert(w);
      continue;
    }
    std::int64_t combos = 1;
    for (int a : s.attrs) combos *= schema_.num_labels(a);
    for (std::size_t e = 0; e < s.entries.size(); ++e) {
      if (static_cast<std::int64_t>(s.entries[e].size()) != combos) {
        throw ContractError(name_ + ": attribute entry has the wrong number of forms");
      }
      for (int c = 0; c < combos; ++c) {
        const std::string& w = s.entries[e][static_cast<std::size_t>(c)];
        // decode c back into labels of s.attrs
        std::vector<int> lab(s.attrs.size());
        int rem = c;
        for (std::size_t j = s.attrs.size(); j-- > 0;) {
          int n = schema_.num_labels(s.attrs[j]);
          lab[j] = rem % n;
          rem /= n;
        }
        auto [it, fresh] = attr_tokens_.try_emplace(w);
        TokenInfo& info = it->second;
        if (fresh) {
          info.slot = static_cast<int>(si);
          info.entry = static_cast<int>(e);
          info.votes.assign(static_cast<std::size_t>(k), -2);  // -2: not yet seen
          for (std::size_t j = 0; j < s.attrs.size(); ++j) info.votes[static_cast<std::size_t>(s.attrs[j])] = lab[j];
          for (int a = 0; a < k; ++a) {
            if (info.votes[static_cast<std::size_t>(a)] == -2) info.votes[static_cast<std::size_t>(a)] = -1;
          }
          continue;
        }
        if (info.slot != static_cast<int>(si) || info.entry != static_cast<int>(e)) {
          throw ContractError(name_ + ": token '" + w + "' appears in two lexicon entries");
        }
        for (std::size_t j = 0; j < s.attrs.size(); ++j) {
          int& v = info.votes[static_cast<std::size_t>(s.attrs[j])];
          if (v != lab[j]) v = -1;
        }
      }
    }
  }
}

void TemplateGrammar::validate() const {
  if (templates_.empty()) throw ContractError(name_ + ": no templates");
  for (const auto& w : content_tokens_) {
    if (attr_tokens_.count(w)) throw ContractError(name_ + ": '" + w + "' is both content and attribute token");
  }
  // Every template must determine every attribute through at least one slot
  // whose forms all carry that attribute's label.
  const int k = schema_.num_attributes();
  for (const auto& t : templates_) {
    for (int a = 0; a < k; ++a) {
      bool decided = false;
      for (int si : t) {
        const Slot& s = slots_.at(static_cast<std::size_t>(si));
        if (s.kind != SlotKind::attribute) continue;
        bool all = true;
        for (const auto& e : s.entries) {
          for (const auto& w : e) all = all && attr_tokens_.at(w).votes[static_cast<std::size_t>(a)] >= 0;
        }
        decided = decided || all;
      }
      if (!decided) throw ContractError(name_ + ": a template leaves attribute " + schema_.attribute(a).name + " undetermined");
    }
  }
}

SynthSentence TemplateGrammar::sample(const AttributeVector& labels, Rng& rng) const {
  SynthSentence out;
  out.labels = labels;
  std::uniform_int_distribution<std::size_t> pick_t(0, templates_.size() - 1);
  const auto& t = templates_[pick_t(rng)];
  for (int si : t) {
    const Slot& s = slots_[static_cast<std::size_t>(si)];
    switch (s.kind) {
      case SlotKind::literal:
        out.tokens.push_back(s.words.front());
        break;
      case SlotKind::content: {
        std::uniform_int_distribution<std::size_t> d(0, s.words.size() - 1);
        out.tokens.push_back(s.words[d(rng)]);
        break;
      }
      case SlotKind::attribute: {
        std::uniform_int_distribution<std::size_t> d(0, s.entries.size() - 1);
        out.tokens.push_back(s.entries[d(rng)][static_cast<std::size_t>(combination(s, labels))]);
        break;
      }
    }
  }
  return out;
}

SynthSentence TemplateGrammar::sample(Rng& rng) const { return sample(sample_labels(schema_, rng), rng); }

std::vector<SynthSentence> TemplateGrammar::generate(int n, std::uint64_t seed) const {
  if (n < 1) throw ContractError("generate: n must be >= 1");
  Rng rng(seed);
  std::vector<SynthSentence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample(rng));
  return out;
}

std::optional<AttributeVector> TemplateGrammar::oracle_label(std::span<const std::string> tokens) const {
  const int k = schema_.num_attributes();
  std::vector<int> labels(static_cast<std::size_t>(k), -1);
  for (const auto& w : tokens) {
    auto it = attr_tokens_.find(w);
    if (it == attr_tokens_.end()) continue;
    for (int a = 0; a < k; ++a) {
      int v = it->second.votes[static_cast<std::size_t>(a)];
      if (v < 0) continue;
      int& cur = labels[static_cast<std::size_t>(a)];
      if (cur >= 0 && cur != v) return std::nullopt;
      cur = v;
    }
  }
  for (int l : labels) {
    if (l < 0) return std::nullopt;
  }
  return AttributeVector(labels);
}

std::optional<AttributeVector> TemplateGrammar::oracle_label(const std::string& sentence) const {
  auto toks = tokenize(sentence);
  return oracle_label(std::span<const std::string>(toks));
}

std::vector<std::string> TemplateGrammar::rule_transfer(std::span<const std::string> tokens,
                                                        const AttributeVector& target) const {
  if (target.size() != schema_.num_attributes()) throw DimensionError("rule_transfer: label arity");
  auto own = oracle_label(tokens);
  if (!own) throw ContractError("rule_transfer: sentence labels are undecidable");
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& w : tokens) {
    auto it = attr_tokens_.find(w);
    if (it == attr_tokens_.end()) {
      if (!content_tokens_.count(w)) throw ContractError("rule_transfer: '" + w + "' is not a grammar token");
      out.push_back(w);
      continue;
    }
    const Slot& s = slots_[static_cast<std::size_t>(it->second.slot)];
    out.push_back(s.entries[static_cast<std::size_t>(it->second.entry)]
                           [static_cast<std::size_t>(combination(s, target))]);
  }
  return out;
}

std::string TemplateGrammar::rule_transfer(const std::string& sentence, const AttributeVector& target) const {
  auto toks = tokenize(sentence);
  auto out = rule_transfer(std::span<const std::string>(toks), target);
  SynthSentence s{out, target};
  return s.text();
}

std::set<std::string> TemplateGrammar::vocabulary() const {
  std::set<std::string> v = content_tokens_;
  for (const auto& [w, info] : attr_tokens_) v.insert(w);
  return v;
}

double TemplateGrammar::entropy_perplexity() const {
  // Distinct choice paths give distinct strings for these grammars, so the
  // sentence entropy is the entropy of the choice process.
  double h = std::log(static_cast<double>(schema_.num_combinations())) +
             std::log(static_cast<double>(templates_.size()));
  double len = 0;
  double tmpl_h = 0;
  for (const auto& t : templates_) {
    for (int si : t) {
      const Slot& s = slots_[static_cast<std::size_t>(si)];
      if (s.kind == SlotKind::content) tmpl_h += std::log(static_cast<double>(s.words.size()));
      if (s.kind == SlotKind::attribute) tmpl_h += std::log(static_cast<double>(s.entries.size()));
    }
    len += static_cast<double>(t.size() + 1);
  }
  const double n = static_cast<double>(templates_.size());
  h += tmpl_h / n;
  return std::exp(h / (len / n));
}

TemplateGrammar TemplateGrammar::sentiment() {
  AttributeSchema schema({{"sentiment", {"negative", "positive"}}});
  std::vector<Slot> slots;
  auto add = [&](Slot s) {
    slots.push_back(std::move(s));
    return static_cast<int>(slots.size() - 1);
  };
  const int the = add(literal("the")), was = add(literal("was")), and_ = add(literal("and"));
  const int my = add(literal("my")), i = add(literal("i")), we = add(literal("we"));
  const int at = add(literal("at")), this_ = add(literal("this")), a = add(literal("a"));
  const int it = add(literal("it")), is = add(literal("is")), for_ = add(literal("for"));
  const int had = add(literal("had")), with = add(literal("with")), our = add(literal("our"));
  const int food = add(content(kFoods)), thing = add(content(kThings));
  const int place = add(content(kPlaces)), person = add(content(kPeople));
  const int color = add(content(kColors)), time = add(content(kTimes));
  const int intens = add(content(kIntens));
  const int adj = add(aligned(0, {
      "terrible awful horrible bad poor mediocre disgusting bland rude slow dirty stale greasy "
      "overpriced boring disappointing noisy unfriendly cramped soggy burnt lousy dreadful "
      "nasty gross filthy sloppy careless lazy useless broken sad miserable unpleasant "
      "inedible tasteless mean grumpy worst annoying pathetic ugly shabby weak",
      "great wonderful excellent good fantastic amazing delicious tasty polite fast clean fresh "
      "crispy reasonable exciting impressive peaceful friendly spacious perfect lovely superb "
      "nice pleasant spotless neat thoughtful attentive helpful sturdy happy cheerful "
      "enjoyable cozy flavorful kind generous best charming brilliant beautiful elegant strong smooth"}));
  const int verb = add(aligned(0, {
      "hated disliked regretted loathed despised avoided dreaded resented detested "
      "criticized mocked tolerated endured cursed ditched abandoned scorned",
      "loved liked enjoyed adored appreciated recommended praised cherished treasured "
      "celebrated admired welcomed savored blessed preferred revisited relished"}));
  const int adv = add(aligned(0, {
      "sadly unfortunately regrettably sloppily poorly badly",
      "happily fortunately thankfully carefully nicely beautifully"}));
  const int served = add(literal("served")), to = add(literal("to")), us = add(literal("us"));
  std::vector<std::vector<int>> templates = {
      {the, food, was, adj},
      {the, thing, at, the, place, was, intens, adj},
      {my, person, verb, the, food, at, this_, place},
      {we, verb, the, color, food, and_, it, was, adj},
      {time, my, person, and_, i, verb, the, place},
      {the, place, had, a, adj, thing, and_, a, color, food},
      {this_, place, is, intens, adj, for_, a, food},
      {our, person, adv, served, the, color, food, time},
      {i, verb, the, thing, with, my, person, time},
      {the, person, at, the, place, was, adj, to, us},
  };
  return TemplateGrammar("sentiment", std::move(schema), std::move(slots), std::move(templates));
}

TemplateGrammar TemplateGrammar::four_attribute() {
  AttributeSchema schema({{"tense", {"past", "present", "future"}},
                          {"negation", {"no", "yes"}},
                          {"person", {"first", "third"}},
                          {"politeness", {"casual", "polite"}}});
  std::vector<Slot> slots;
  auto add = [&](Slot s) {
    slots.push_back(std::move(s));
    return static_cast<int>(slots.size() - 1);
  };
  const int the = add(literal("the")), at = add(literal("at")), a = add(literal("a"));
  const int with = add(literal("with")), my = add(literal("my")), in = add(literal("in"));
  const int food = add(content(kFoods)), thing = add(content(kThings));
  const int place = add(content(kPlaces)), person = add(content(kPeople));
  const int color = add(content(kColors));
  const int verb = add(content(
      "eat cook buy sell order find keep bring take share try taste fix clean check carry "
      "open close paint wash move build order pack choose watch read"));
  const int marker = add(aligned(3, {"hey so yeah okay", "sir madam respectfully please"}));
  const int pron = add(aligned(2, {"i we", "he she"}));
  // aux forms over (tense, negation, person); combination index is
  // ((tense * 2) + negation) * 2 + person
  Slot aux{Kind::attribute, {}, {0, 1, 2}, {}};
  aux.entries.push_back({"did", "did", "didn't", "didn't", "do", "does", "don't", "doesn't",
                         "will", "will", "won't", "won't"});
  const int aux_slot = add(std::move(aux));
  std::vector<std::vector<int>> templates = {
      {marker, pron, aux_slot, verb, the, food},
      {marker, pron, aux_slot, verb, the, color, thing, at, the, place},
      {marker, pron, aux_slot, verb, a, food, with, my, person},
      {marker, pron, aux_slot, verb, the, thing, in, the, place},
  };
  return TemplateGrammar("multi", std::move(schema), std::move(slots), std::move(templates));
}

TemplateGrammar TemplateGrammar::diglossia() {
  AttributeSchema schema({{"style", {"archaic", "modern"}}});
  std::vector<Slot> slots;
  auto add = [&](Slot s) {
    slots.push_back(std::move(s));
    return static_cast<int>(slots.size() - 1);
  };
  const int the = add(literal("the")), a = add(literal("a")), is = add(literal("is"));
  const int in = add(literal("in")), to = add(literal("to")), she = add(literal("she"));
  const int we = add(literal("we")), go = add(literal("go")), with = add(literal("with"));
  const int food = add(content(kFoods)), thing = add(content(kThings));
  const int place = add(content(kPlaces)), person = add(content(kPeople));
  const int color = add(content(kColors)), intens = add(content(kIntens));
  const int quality = add(content(
      "kind brave wise gentle clever proud strong quiet patient honest noble humble bold "
      "calm loyal merry weary young fair"));
  const int pron = add(aligned(0, {"thou", "you"}));
  const int be = add(aligned(0, {"art", "are"}));
  const int poss = add(aligned(0, {"thy", "your"}));
  const int has = add(aligned(0, {"hath doth", "has does"}));
  const int adv = add(aligned(0, {"oft anon mayhap verily betimes", "often soon maybe indeed early"}));
  std::vector<std::vector<int>> templates = {
      {pron, be, intens, quality},
      {poss, food, is, in, the, place},
      {she, has, a, color, thing},
      {adv, we, go, to, the, place, with, the, person},
      {poss, person, is, intens, quality},
      {adv, she, is, in, the, place},
      {we, go, to, the, place, with, poss, person},
      {the, person, has, a, color, food},
  };
  return TemplateGrammar("diglossia", std::move(schema), std::move(slots), std::move(templates));
}

TemplateGrammar TemplateGrammar::by_name(const std::string& name) {
  if (name == "sentiment") return sentiment();
  if (name == "multi" || name == "four_attribute") return four_attribute();
  if (name == "diglossia") return diglossia();
  throw ConfigError("unknown grammar '" + name + "' (expected sentiment, multi or diglossia)");
}

LabeledCorpus to_corpus(std::span<const SynthSentence> sentences, const AttributeSchema& schema,
                        const Vocabulary& vocab, int max_len) {
  LabeledCorpus c;
  c.schema = schema;
  c.examples.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<int> ids;
    ids.reserve(s.tokens.size());
    for (const auto& t : s.tokens) ids.push_back(vocab.id(t));
    c.examples.push_back({TokenSequence::from_content(ids, max_len), s.labels});
  }
  return c;
}

std::vector<std::string> sentence_texts(std::span<const SynthSentence> sentences) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.text());
  return out;
}

void write_synth(const std::filesystem::path& dir, const AttributeSchema& schema,
                 std::span<const SynthSentence> sentences) {
  std::filesystem::create_directories(dir);
  schema.save(dir / "schema.txt");
  std::ofstream out(dir / "corpus.tsv");
  if (!out) throw InputError("cannot write " + (dir / "corpus.tsv").string());
  for (const auto& s : sentences) {
    out << s.text();
    for (int k = 0; k < schema.num_attributes(); ++k) {
      const auto& a = schema.attribute(k);
      out << '\t' << a.name << '=' << a.labels[static_cast<std::size_t>(s.labels.label(k))];
    }
    out << '\n';
  }
}

Labeler grammar_labeler(const TemplateGrammar& grammar, const Vocabulary& vocab) {
  return [grammar, vocab](std::span<const TokenSequence> xs) {
    std::vector<std::optional<AttributeVector>> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
      std::vector<std::string> toks;
      for (int id : x.content()) toks.push_back(vocab.token(id));
      out.push_back(grammar.oracle_label(std::span<const std::string>(toks)));
    }
    return out;
  };
}

Rewriter rule_rewriter(const TemplateGrammar& grammar, const Vocabulary& vocab) {
  return [grammar, vocab](std::span<const TokenSequence> xs, std::span<const AttributeVector> targets) {
    if (xs.size() != targets.size()) throw DimensionError("rule_rewriter: label count mismatch");
    std::vector<TokenSequence> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<std::string> toks;
      for (int id : xs[i].content()) toks.push_back(vocab.token(id));
      auto y = grammar.rule_transfer(std::span<const std::string>(toks), targets[i]);
      std::vector<int> ids;
      for (const auto& t : y) ids.push_back(vocab.id(t));
      out.push_back(TokenSequence::from_content(ids));
    }
    return out;
  };
}

}  // namespace attrgen
