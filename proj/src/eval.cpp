#include "attrgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "attrgen/errors.hpp"
#include "attrgen/model.hpp"

namespace attrgen {

// ---- BLEU ------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts ngrams(std::span<const int> s, int n) {
  NgramCounts c;
  if (static_cast<int>(s.size()) < n) return c;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
    ++c[std::vector<int>(s.begin() + static_cast<std::ptrdiff_t>(i),
                         s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return c;
}

struct BleuStats {
  std::vector<double> matched, total;
  double cand_len = 0, ref_len = 0;
};

BleuStats bleu_stats(std::span<const int> cand, std::span<const std::vector<int>> refs, int max_n) {
  BleuStats st;
  st.matched.assign(static_cast<std::size_t>(max_n), 0);
  st.total.assign(static_cast<std::size_t>(max_n), 0);
  st.cand_len = static_cast<double>(cand.size());
  // closest reference length, shorter one on ties
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    auto d = [&](std::size_t l) { return l > cand.size() ? l - cand.size() : cand.size() - l; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  st.ref_len = static_cast<double>(best);
  for (int n = 1; n <= max_n; ++n) {
    auto c = ngrams(cand, n);
    NgramCounts maxref;
    for (const auto& r : refs) {
      for (const auto& [g, k] : ngrams(r, n)) maxref[g] = std::max(maxref[g], k);
    }
    double m = 0, t = 0;
    for (const auto& [g, k] : c) {
      t += k;
      auto it = maxref.find(g);
      if (it != maxref.end()) m += std::min(k, it->second);
    }
    st.matched[static_cast<std::size_t>(n - 1)] = m;
    st.total[static_cast<std::size_t>(n - 1)] = t;
  }
  return st;
}

double combine(const BleuStats& st, const BleuOptions& opts) {
  if (st.cand_len == 0) return 0;
  double log_sum = 0;
  for (int n = 1; n <= opts.max_n; ++n) {
    double m = st.matched[static_cast<std::size_t>(n - 1)];
    double t = st.total[static_cast<std::size_t>(n - 1)];
    if (n >= 2 && opts.smooth) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return 0;
    log_sum += std::log(m / t);
  }
  double bp = st.cand_len > st.ref_len ? 1.0 : std::exp(1.0 - st.ref_len / st.cand_len);
  return 100.0 * bp * std::exp(log_sum / opts.max_n);
}

void check_order(int max_n) {
  if (max_n < 1 || max_n > 4) throw ContractError("bleu: max_n must lie in 1..4");
}

}  // namespace

double bleu(std::span<const int> candidate, std::span<const std::vector<int>> references, BleuOptions opts) {
  check_order(opts.max_n);
  if (references.empty()) throw ContractError("bleu: no references");
  if (candidate.empty()) return 0;
  return combine(bleu_stats(candidate, references, opts.max_n), opts);
}

double bleu(const TokenSequence& candidate, const TokenSequence& reference, int max_n) {
  std::vector<std::vector<int>> refs{std::vector<int>(reference.content().begin(), reference.content().end())};
  return bleu(candidate.content(), refs, BleuOptions{max_n, true});
}

double corpus_bleu(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
                   BleuOptions opts) {
  check_order(opts.max_n);
  if (candidates.size() != references.size()) throw DimensionError("corpus_bleu: size mismatch");
  BleuStats pooled;
  pooled.matched.assign(static_cast<std::size_t>(opts.max_n), 0);
  pooled.total.assign(static_cast<std::size_t>(opts.max_n), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::vector<std::vector<int>> refs{
        std::vector<int>(references[i].content().begin(), references[i].content().end())};
    auto st = bleu_stats(candidates[i].content(), refs, opts.max_n);
    for (int n = 0; n < opts.max_n; ++n) {
      pooled.matched[static_cast<std::size_t>(n)] += st.matched[static_cast<std::size_t>(n)];
      pooled.total[static_cast<std::size_t>(n)] += st.total[static_cast<std::size_t>(n)];
    }
    pooled.cand_len += st.cand_len;
    pooled.ref_len += st.ref_len;
  }
  return combine(pooled, opts);
}

// ---- attribute classifier --------------------------------------------------

namespace {

std::vector<int> column(std::span<const TokenSequence> xs, int t) {
  std::vector<int> c(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto& ids = xs[b].ids;
    c[b] = t < static_cast<int>(ids.size()) ? ids[static_cast<std::size_t>(t)] : Vocabulary::kPad;
  }
  return c;
}

std::string schema_block(const AttributeSchema& s) { return s.to_string(); }

std::map<std::string, std::string> parse_kv(const std::string& text, std::string* rest) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  bool in_rest = false;
  while (std::getline(in, line)) {
    if (line == "[schema]") {
      in_rest = true;
      continue;
    }
    if (in_rest) {
      *rest += line + "\n";
      continue;
    }
    auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

}  // namespace

AttributeClassifier::AttributeClassifier(int vocab_size, AttributeSchema schema, ClassifierConfig cfg)
    : vocab_size_(vocab_size),
      schema_(std::move(schema)),
      cfg_(std::move(cfg)),
      embed_(std::vector<Index>{vocab_size, cfg_.d_emb}, true) {
  Rng rng(cfg_.seed);
  fill_uniform(embed_, 0.1, rng);
  for (int w : cfg_.widths) {
    convs_.emplace_back(w * cfg_.d_emb, cfg_.filters);
    convs_.back().init(rng);
  }
  const int feat = cfg_.filters * static_cast<int>(cfg_.widths.size());
  for (int k = 0; k < schema_.num_attributes(); ++k) {
    heads_.emplace_back(feat, schema_.num_labels(k));
    heads_.back().init(rng);
  }
}

ParameterList<double> AttributeClassifier::parameters() {
  ParameterList<double> p{{"clf.embed", &embed_}};
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(p, "clf.conv" + std::to_string(i));
  for (std::size_t i = 0; i < heads_.size(); ++i) heads_[i].collect(p, "clf.head" + std::to_string(i));
  return p;
}

std::vector<Var<double>> AttributeClassifier::logits(Tape<double>& tape, std::span<const TokenSequence> xs,
                                                     bool trainable) {
  if (xs.empty()) throw ContractError("classifier: empty batch");
  auto emb = bind_param(tape, embed_, trainable);
  int steps = 0;
  for (const auto& x : xs) steps = std::max(steps, x.length());
  const int max_w = *std::max_element(cfg_.widths.begin(), cfg_.widths.end());
  steps = std::max(steps, max_w);
  std::vector<Var<double>> cols;
  for (int t = 0; t < steps; ++t) {
    auto c = column(xs, t);
    cols.push_back(gather_rows(emb, std::span<const int>(c)));
  }
  std::vector<Var<double>> pooled;
  for (std::size_t wi = 0; wi < cfg_.widths.size(); ++wi) {
    const int w = cfg_.widths[wi];
    auto conv = convs_[wi].bind(tape, trainable);
    std::vector<Var<double>> windows;
    std::vector<std::vector<char>> valid;
    for (int s = 0; s + w <= steps; ++s) {
      auto win = concat_cols(std::span<const Var<double>>(cols.data() + s, static_cast<std::size_t>(w)));
      windows.push_back(relu(apply(conv, win)));
      std::vector<char> v(xs.size());
      for (std::size_t b = 0; b < xs.size(); ++b) v[b] = s <= std::max(xs[b].length() - w, 0);
      valid.push_back(std::move(v));
    }
    pooled.push_back(masked_max(std::span<const Var<double>>(windows), valid));
  }
  auto feat = concat_cols(std::span<const Var<double>>(pooled));
  std::vector<Var<double>> out;
  for (auto& h : heads_) out.push_back(apply(h.bind(tape, trainable), feat));
  return out;
}

std::vector<Matrix<double>> AttributeClassifier::probabilities(std::span<const TokenSequence> xs) {
  std::vector<Matrix<double>> out(static_cast<std::size_t>(schema_.num_attributes()));
  for (std::size_t s = 0; s < xs.size(); s += 256) {
    auto part = xs.subspan(s, std::min<std::size_t>(256, xs.size() - s));
    Tape<double> tape;
    auto lg = logits(tape, part, false);
    for (std::size_t k = 0; k < lg.size(); ++k) {
      Matrix<double> p = softmax_rows_value(lg[k].value());
      Matrix<double> merged(out[k].rows() + p.rows(), p.cols());
      if (out[k].rows() > 0) merged.topRows(out[k].rows()) = out[k];
      merged.bottomRows(p.rows()) = p;
      out[k] = std::move(merged);
    }
  }
  return out;
}

std::vector<AttributeVector> AttributeClassifier::predict(std::span<const TokenSequence> xs) {
  auto probs = probabilities(xs);
  std::vector<AttributeVector> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<int> l;
    for (const auto& p : probs) {
      Index arg = 0;
      p.row(static_cast<Index>(i)).maxCoeff(&arg);
      l.push_back(static_cast<int>(arg));
    }
    out.emplace_back(std::move(l));
  }
  return out;
}

std::vector<double> AttributeClassifier::accuracy(const LabeledCorpus& corpus) {
  std::vector<TokenSequence> xs;
  for (const auto& e : corpus.examples) xs.push_back(e.tokens);
  auto pred = predict(xs);
  std::vector<double> acc(static_cast<std::size_t>(schema_.num_attributes()), 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int k = 0; k < schema_.num_attributes(); ++k) {
      acc[static_cast<std::size_t>(k)] += pred[i].label(k) == corpus.examples[i].labels.label(k);
    }
  }
  for (auto& a : acc) a /= static_cast<double>(std::max<std::size_t>(1, xs.size()));
  return acc;
}

void AttributeClassifier::save(const std::filesystem::path& path) {
  std::ostringstream m;
  m << "kind = classifier\nvocab_size = " << vocab_size_ << "\nd_emb = " << cfg_.d_emb
    << "\nfilters = " << cfg_.filters << "\nwidths =";
  for (int w : cfg_.widths) m << ' ' << w;
  m << "\nheld_out = " << std::setprecision(17) << held_out_ << "\n[schema]\n" << schema_block(schema_);
  write_tensor_archive(path, fnv1a64(m.str()), m.str(), export_tensors(parameters()));
}

AttributeClassifier AttributeClassifier::load(const std::filesystem::path& path) {
  auto a = read_tensor_archive(path);
  if (fnv1a64(a.meta) != a.digest) throw InputError(path.string() + ": digest mismatch");
  std::string schema_text;
  auto kv = parse_kv(a.meta, &schema_text);
  if (kv["kind"] != "classifier") throw InputError(path.string() + ": not a classifier file");
  ClassifierConfig cfg;
  cfg.d_emb = std::stoi(kv["d_emb"]);
  cfg.filters = std::stoi(kv["filters"]);
  cfg.widths.clear();
  std::istringstream ws(kv["widths"]);
  for (int w; ws >> w;) cfg.widths.push_back(w);
  AttributeClassifier c(std::stoi(kv["vocab_size"]), AttributeSchema::parse(schema_text, path.string()), cfg);
  import_tensors(a.tensors, c.parameters());
  c.held_out_ = std::stod(kv["held_out"]);
  return c;
}

AttributeClassifier train_attribute_classifier(const LabeledCorpus& train, const LabeledCorpus& held_out,
                                               int vocab_size, const ClassifierConfig& cfg,
                                               bool enforce_gate) {
  if (train.empty() || held_out.empty()) throw InputError("classifier: empty training or held-out split");
  AttributeClassifier clf(vocab_size, train.schema, cfg);
  auto params = clf.parameters();
  Adam<double> opt(AdamOptions{.lr = cfg.lr});
  const int K = train.schema.num_attributes();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& batch : make_batches(train, static_cast<std::size_t>(cfg.batch_size), cfg.seed + static_cast<std::uint64_t>(epoch))) {
      Tape<double> tape;
      auto lg = clf.logits(tape, batch.sequences, true);
      std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
      Var<double> loss;
      for (int k = 0; k < K; ++k) {
        std::vector<int> tg;
        for (const auto& l : batch.labels) tg.push_back(l.label(k));
        auto ce = softmax_cross_entropy(lg[static_cast<std::size_t>(k)], std::span<const int>(tg),
                                        std::span<const double>(w));
        loss = k == 0 ? ce : add(loss, ce);
      }
      tape.backward(loss);
      clip_grad_norm(params, 5.0);
      opt.step(params);
    }
  }
  auto ho = clf.accuracy(held_out);
  auto tr = clf.accuracy(train);
  clf.held_out_ = *std::min_element(ho.begin(), ho.end());
  clf.train_acc_ = *std::min_element(tr.begin(), tr.end());
  if (enforce_gate && clf.held_out_ < cfg.gate) {
    std::ostringstream os;
    os << "attribute classifier reached only " << clf.held_out_ << " held-out accuracy (gate " << cfg.gate
       << "); accuracy measured with it would be unreliable";
    throw GateError(os.str());
  }
  return clf;
}

Labeler classifier_labeler(AttributeClassifier& clf) {
  return [&clf](std::span<const TokenSequence> xs) {
    auto p = clf.predict(xs);
    return std::vector<std::optional<AttributeVector>>(p.begin(), p.end());
  };
}

// ---- fluency language model ------------------------------------------------

FluencyLM::FluencyLM(int vocab_size, LmConfig cfg)
    : vocab_size_(vocab_size),
      cfg_(cfg),
      embed_(std::vector<Index>{vocab_size, cfg.d_emb}, true),
      cell_(cfg.d_emb, cfg.hidden),
      out_(cfg.hidden, vocab_size) {
  Rng rng(cfg.seed);
  fill_uniform(embed_, 0.1, rng);
  cell_.init(rng);
  out_.init(rng);
}

ParameterList<double> FluencyLM::parameters() {
  ParameterList<double> p{{"lm.embed", &embed_}};
  cell_.collect(p, "lm.gru");
  out_.collect(p, "lm.out");
  return p;
}

namespace {

struct LmPass {
  Var<double> logits;
  std::vector<int> targets;
  std::vector<double> weights;
};

}  // namespace

Var<double> FluencyLM::batch_nll(Tape<double>& tape, std::span<const TokenSequence> xs, bool trainable) {
  if (xs.empty()) throw ContractError("lm: empty batch");
  auto emb = bind_param(tape, embed_, trainable);
  auto cell = cell_.bind(tape, trainable);
  auto out = out_.bind(tape, trainable);
  int steps = 0;
  std::vector<int> lengths;
  for (const auto& x : xs) {
    lengths.push_back(x.length());
    steps = std::max(steps, x.length());
  }
  std::vector<Var<double>> inputs;
  for (int t = 0; t < steps; ++t) {
    std::vector<int> c(xs.size(), Vocabulary::kBos);
    if (t > 0) c = column(xs, t - 1);
    inputs.push_back(gather_rows(emb, std::span<const int>(c)));
  }
  auto states = gru_run(cell, std::span<const Var<double>>(inputs), lengths);
  auto logits = apply(out, concat_rows(std::span<const Var<double>>(states)));
  const std::size_t B = xs.size();
  std::vector<int> tg(B * static_cast<std::size_t>(steps), Vocabulary::kPad);
  std::vector<double> w(tg.size(), 0.0);
  for (int t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      if (t < lengths[b]) {
        tg[static_cast<std::size_t>(t) * B + b] = xs[b].ids[static_cast<std::size_t>(t)];
        w[static_cast<std::size_t>(t) * B + b] = 1.0;
      }
    }
  }
  return softmax_cross_entropy(logits, std::span<const int>(tg), std::span<const double>(w));
}

std::vector<double> FluencyLM::sentence_nll(std::span<const TokenSequence> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (std::size_t s = 0; s < xs.size(); s += 256) {
    auto part = xs.subspan(s, std::min<std::size_t>(256, xs.size() - s));
    Tape<double> tape;
    auto emb = tape.frozen(embed_);
    auto cell = cell_.bind(tape, false);
    auto o = out_.bind(tape, false);
    int steps = 0;
    std::vector<int> lengths;
    for (const auto& x : part) {
      lengths.push_back(x.length());
      steps = std::max(steps, x.length());
    }
    std::vector<Var<double>> inputs;
    for (int t = 0; t < steps; ++t) {
      std::vector<int> c(part.size(), Vocabulary::kBos);
      if (t > 0) c = column(part, t - 1);
      inputs.push_back(gather_rows(emb, std::span<const int>(c)));
    }
    auto states = gru_run(cell, std::span<const Var<double>>(inputs), lengths);
    std::vector<double> nll(part.size(), 0.0);
    for (int t = 0; t < steps; ++t) {
      Matrix<double> lg = (states[static_cast<std::size_t>(t)].value() * o.w.value()).rowwise() + o.b.value().row(0);
      for (std::size_t b = 0; b < part.size(); ++b) {
        if (t >= lengths[b]) continue;
        auto row = lg.row(static_cast<Index>(b));
        double m = row.maxCoeff();
        double lse = m + std::log((row.array() - m).exp().sum());
        nll[b] += lse - row(part[b].ids[static_cast<std::size_t>(t)]);
      }
    }
    out.insert(out.end(), nll.begin(), nll.end());
  }
  return out;
}

void FluencyLM::save(const std::filesystem::path& path) {
  std::ostringstream m;
  m << "kind = lm\nvocab_size = " << vocab_size_ << "\nd_emb = " << cfg_.d_emb << "\nhidden = " << cfg_.hidden
    << "\nheld_out = " << std::setprecision(17) << held_out_ppl_ << "\n";
  write_tensor_archive(path, fnv1a64(m.str()), m.str(), export_tensors(parameters()));
}

FluencyLM FluencyLM::load(const std::filesystem::path& path) {
  auto a = read_tensor_archive(path);
  if (fnv1a64(a.meta) != a.digest) throw InputError(path.string() + ": digest mismatch");
  std::string unused;
  auto kv = parse_kv(a.meta, &unused);
  if (kv["kind"] != "lm") throw InputError(path.string() + ": not a language model file");
  LmConfig cfg;
  cfg.d_emb = std::stoi(kv["d_emb"]);
  cfg.hidden = std::stoi(kv["hidden"]);
  FluencyLM lm(std::stoi(kv["vocab_size"]), cfg);
  import_tensors(a.tensors, lm.parameters());
  lm.held_out_ppl_ = std::stod(kv["held_out"]);
  return lm;
}

FluencyLM train_fluency_lm(const LabeledCorpus& train, const LabeledCorpus& held_out, int vocab_size,
                           const LmConfig& cfg) {
  if (train.empty()) throw InputError("lm: empty training split");
  FluencyLM lm(vocab_size, cfg);
  auto params = lm.parameters();
  Adam<double> opt(AdamOptions{.lr = cfg.lr});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& batch : make_batches(train, static_cast<std::size_t>(cfg.batch_size), cfg.seed + static_cast<std::uint64_t>(epoch))) {
      Tape<double> tape;
      double tokens = 0;
      for (int l : batch.lengths) tokens += l;
      auto loss = scale(lm.batch_nll(tape, batch.sequences, true), 1.0 / tokens);
      tape.backward(loss);
      clip_grad_norm(params, 5.0);
      opt.step(params);
    }
  }
  if (!held_out.empty()) {
    std::vector<TokenSequence> xs;
    for (const auto& e : held_out.examples) xs.push_back(e.tokens);
    lm.set_held_out_perplexity(fluency(xs, lm));
  }
  return lm;
}

double fluency(std::span<const TokenSequence> xs, FluencyLM& lm) {
  if (xs.empty()) throw InputError("fluency: empty sentence set");
  auto nll = lm.sentence_nll(xs);
  double total = 0, tokens = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += nll[i];
    tokens += xs[i].length();
  }
  return std::exp(total / tokens);
}

// ---- transfer metrics ------------------------------------------------------

AccuracyResult score_outputs(std::span<const TokenSequence> outputs, std::span<const AttributeVector> targets,
                             const AttributeSchema& schema, const Labeler& label) {
  if (outputs.size() != targets.size()) throw DimensionError("score_outputs: size mismatch");
  AccuracyResult r;
  const int K = schema.num_attributes();
  r.per_attribute.assign(static_cast<std::size_t>(K), 0);
  auto labels = label(outputs);
  double decided = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!labels[i]) continue;
    decided += 1;
    for (int k = 0; k < K; ++k) r.per_attribute[static_cast<std::size_t>(k)] += labels[i]->label(k) == targets[i].label(k);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, outputs.size()));
  for (auto& a : r.per_attribute) a /= n;
  r.overall = std::accumulate(r.per_attribute.begin(), r.per_attribute.end(), 0.0) / K;
  r.decidable_rate = decided / n;
  r.outputs.assign(outputs.begin(), outputs.end());
  r.targets.assign(targets.begin(), targets.end());
  return r;
}

AccuracyResult attribute_accuracy(const Rewriter& rewrite, const LabeledCorpus& corpus, const Labeler& label,
                                  std::uint64_t seed) {
  if (corpus.empty()) throw InputError("attribute_accuracy: empty corpus");
  Rng rng(seed);
  std::vector<TokenSequence> xs;
  std::vector<AttributeVector> targets;
  for (const auto& e : corpus.examples) {
    xs.push_back(e.tokens);
    targets.push_back(sample_mismatched_labels(e.labels, corpus.schema, rng));
  }
  auto ys = rewrite(xs, targets);
  return score_outputs(ys, targets, corpus.schema, label);
}

ContentScore f_content(const Rewriter& rewrite, const LabeledCorpus& corpus, int attribute, ContentOptions opts) {
  const auto& schema = corpus.schema;
  if (attribute < 0 || attribute >= schema.num_attributes()) throw IndexError("f_content: attribute index");
  const int L = schema.num_labels(attribute);
  ContentScore total;
  int pairs = 0;
  for (int a = 0; a < L; ++a) {
    std::vector<TokenSequence> xs;
    std::vector<AttributeVector> own;
    for (const auto& e : corpus.examples) {
      if (e.labels.label(attribute) != a) continue;
      xs.push_back(e.tokens);
      own.push_back(e.labels);
    }
    if (xs.empty()) continue;
    for (int b = 0; b < L; ++b) {
      if (b == a) continue;
      std::vector<AttributeVector> to_b = own;
      for (auto& l : to_b) l.set_label(attribute, b);
      auto ys = rewrite(xs, to_b);
      auto back = rewrite(ys, own);
      double b1 = 0, b4 = 0;
      if (opts.corpus_level) {
        b1 = corpus_bleu(back, xs, BleuOptions{1, true});
        b4 = corpus_bleu(back, xs, BleuOptions{4, true});
      } else {
        for (std::size_t i = 0; i < xs.size(); ++i) {
          b1 += bleu(back[i], xs[i], 1);
          b4 += bleu(back[i], xs[i], 4);
        }
        b1 /= static_cast<double>(xs.size());
        b4 /= static_cast<double>(xs.size());
      }
      total.bleu1 += b1;
      total.bleu4 += b4;
      ++pairs;
    }
  }
  if (pairs == 0) throw InputError("f_content: no sentences with a transferable label");
  total.bleu1 /= pairs;
  total.bleu4 /= pairs;
  return total;
}

ContentScore f_content(const Rewriter& rewrite, const LabeledCorpus& src, const LabeledCorpus& tgt, int attribute,
                       ContentOptions opts) {
  if (src.empty() || tgt.empty()) throw InputError("f_content: empty corpus");
  LabeledCorpus pooled;
  pooled.schema = src.schema;
  // pooled in a canonical order so that swapping the arguments is exact
  const LabeledCorpus* first = &src;
  const LabeledCorpus* second = &tgt;
  auto key = [](const LabeledCorpus& c) {
    std::vector<std::vector<int>> k;
    for (const auto& e : c.examples) k.push_back(e.tokens.ids);
    return k;
  };
  if (key(tgt) < key(src)) std::swap(first, second);
  pooled.examples = first->examples;
  pooled.examples.insert(pooled.examples.end(), second->examples.begin(), second->examples.end());
  return f_content(rewrite, pooled, attribute, opts);
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "metric,attribute,value\n";
  for (std::size_t k = 0; k < attribute_names.size(); ++k) {
    os << "attribute_accuracy," << attribute_names[k] << ',' << attribute_accuracy[k] << '\n';
  }
  os << "attribute_accuracy,overall," << overall_accuracy << '\n';
  os << "decidable_rate,overall," << decidable_rate << '\n';
  for (std::size_t k = 0; k < content.size(); ++k) {
    os << "content_bleu1," << attribute_names[k] << ',' << content[k].bleu1 << '\n';
    os << "content_bleu4," << attribute_names[k] << ',' << content[k].bleu4 << '\n';
  }
  os << "fluency_perplexity,overall," << fluency_perplexity << '\n';
  os << "lm_held_out_perplexity,overall," << lm_held_out_perplexity << '\n';
  os << "samples,overall," << samples << '\n';
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "samples            " << samples << '\n';
  for (std::size_t k = 0; k < attribute_names.size(); ++k) {
    os << "accuracy[" << attribute_names[k] << "]  " << attribute_accuracy[k] << '\n';
  }
  os << "accuracy overall   " << overall_accuracy << '\n';
  for (std::size_t k = 0; k < content.size(); ++k) {
    os << "content[" << attribute_names[k] << "]   BLEU-1 " << std::setprecision(2) << content[k].bleu1
       << "  BLEU-4 " << content[k].bleu4 << std::setprecision(3) << '\n';
  }
  os << "fluency ppl        " << fluency_perplexity << "  (LM held-out " << lm_held_out_perplexity << ")\n";
  return os.str();
}

MetricReport evaluate(const Rewriter& rewrite, const LabeledCorpus& test, const Labeler& label, FluencyLM& lm,
                      std::uint64_t seed, ContentOptions opts) {
  MetricReport r;
  auto acc = attribute_accuracy(rewrite, test, label, seed);
  for (int k = 0; k < test.schema.num_attributes(); ++k) {
    r.attribute_names.push_back(test.schema.attribute(k).name);
    r.content.push_back(f_content(rewrite, test, k, opts));
  }
  r.attribute_accuracy = acc.per_attribute;
  r.overall_accuracy = acc.overall;
  r.decidable_rate = acc.decidable_rate;
  r.fluency_perplexity = fluency(acc.outputs, lm);
  r.lm_held_out_perplexity = lm.held_out_perplexity();
  r.samples = test.size();
  return r;
}

MetricReport evaluate_outputs(std::span<const TokenSequence> inputs, std::span<const TokenSequence> outputs,
                              std::span<const AttributeVector> targets, const AttributeSchema& schema,
                              const Labeler& label, FluencyLM& lm) {
  if (inputs.size() != outputs.size()) throw DimensionError("evaluate_outputs: size mismatch");
  MetricReport r;
  auto acc = score_outputs(outputs, targets, schema, label);
  ContentScore c;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    c.bleu1 += bleu(outputs[i], inputs[i], 1);
    c.bleu4 += bleu(outputs[i], inputs[i], 4);
  }
  c.bleu1 /= static_cast<double>(std::max<std::size_t>(1, inputs.size()));
  c.bleu4 /= static_cast<double>(std::max<std::size_t>(1, inputs.size()));
  for (int k = 0; k < schema.num_attributes(); ++k) {
    r.attribute_names.push_back(schema.attribute(k).name);
    r.content.push_back(c);
  }
  r.attribute_accuracy = acc.per_attribute;
  r.overall_accuracy = acc.overall;
  r.decidable_rate = acc.decidable_rate;
  r.fluency_perplexity = fluency(outputs, lm);
  r.lm_held_out_perplexity = lm.held_out_perplexity();
  r.samples = inputs.size();
  return r;
}

}  // namespace attrgen
