#include "attrgen/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "attrgen/errors.hpp"
#include "attrgen/eval.hpp"
#include "attrgen/model.hpp"

namespace attrgen {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- data directories ------------------------------------------------------

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.schema = AttributeSchema::load(dir / "schema.txt");
  if (fs::exists(dir / "vocab.txt")) {
    d.vocab = Vocabulary::load(dir / "vocab.txt");
  } else {
    auto sents = read_corpus_sentences(dir / "train.tsv");
    d.vocab = Vocabulary::build(sents);
  }
  d.train = load_corpus(dir / "train.tsv", d.schema, d.vocab, 0);
  d.train.split = Split::train;
  d.valid = load_corpus(dir / "valid.tsv", d.schema, d.vocab, 0);
  d.valid.split = Split::valid;
  if (fs::exists(dir / "test.tsv")) {
    d.test = load_corpus(dir / "test.tsv", d.schema, d.vocab, 0);
    d.test.split = Split::test;
  }
  return d;
}

void write_dataset(const fs::path& dir, const AttributeSchema& schema, std::span<const SynthSentence> sentences) {
  write_synth(dir, schema, sentences);
  auto texts = sentence_texts(sentences);
  auto vocab = Vocabulary::build(texts);
  vocab.save(dir / "vocab.txt");
  auto all = to_corpus(sentences, schema, vocab);
  const std::size_t n = all.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;
  LabeledCorpus parts[3];
  for (auto& p : parts) p.schema = schema;
  for (std::size_t i = 0; i < n; ++i) {
    int which = i < n_train ? 0 : i < n_train + n_valid ? 1 : 2;
    parts[which].examples.push_back(all.examples[i]);
  }
  write_corpus(dir / "train.tsv", parts[0], vocab);
  write_corpus(dir / "valid.tsv", parts[1], vocab);
  write_corpus(dir / "test.tsv", parts[2], vocab);
}

std::vector<PairedExample> load_pairs(const fs::path& path, const AttributeSchema& schema, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open pairs file " + path.string());
  std::vector<PairedExample> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() < 3) throw ParseError(path.string(), no, "expected source, target and labels");
    std::string labels;
    for (std::size_t i = 2; i < cols.size(); ++i) labels += (i > 2 ? "," : "") + cols[i];
    PairedExample p;
    auto src = vocab.encode(cols[0]);
    auto tgt = vocab.encode(cols[1]);
    if (src.empty() || tgt.empty()) throw ParseError(path.string(), no, "empty sentence");
    p.source = TokenSequence::from_content(src);
    p.target = TokenSequence::from_content(tgt);
    try {
      p.target_labels = parse_label_assignment(labels, schema);
    } catch (const SchemaError& e) {
      throw ParseError(path.string(), no, e.what());
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw InputError(path.string() + ": no pairs");
  return out;
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string compiler_version() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

struct Manifest {
  json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Manifest(const std::string& verb, const std::vector<std::string>& args) {
    j["tool"] = "attrgen";
    j["version"] = kToolVersion;
    j["compiler"] = compiler_version();
    j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    j["verb"] = verb;
    j["cwd"] = fs::current_path().string();
    j["args"] = std::vector<std::string>(args.begin() + 1, args.end());
    j["timings"] = json::object();
    j["outputs"] = json::array();
  }
  void config(const TrainConfig& c) {
    j["config"] = c.to_string();
    j["config_digest"] = format_hex64(c.digest());
    j["seed"] = c.seed;
  }
  void seed(std::uint64_t s) { j["seed"] = s; }
  void phase(const std::string& name, double secs) { j["timings"][name] = secs; }
  void output(const fs::path& p) { j["outputs"].push_back(p.string()); }
  void write(const fs::path& dir) {
    j["timings"]["total"] = seconds_since(start);
    fs::create_directories(dir);
    std::ofstream os(dir / "manifest.json");
    if (!os) throw InputError("cannot write manifest in " + dir.string());
    os << j.dump(2) << "\n";
  }
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c, bool with_config) {
  if (with_config) {
    app->add_option("--config", c.config, "configuration file (key = value lines)");
    app->add_option("--set", c.sets, "override one configuration key, key=value (repeatable)");
  }
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
}

TrainConfig resolve_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  for (const auto& s : c.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string x) {
      while (!x.empty() && x.front() == ' ') x.erase(x.begin());
      while (!x.empty() && x.back() == ' ') x.pop_back();
      return x;
    };
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

inline constexpr std::uint64_t kValidationClassifierSeed = 101;
inline constexpr std::uint64_t kEvaluationClassifierSeed = 303;

struct LabelSource {
  std::shared_ptr<AttributeClassifier> classifier;
  std::optional<TemplateGrammar> grammar;
  Labeler labeler;
  std::string description;
};

LabelSource make_label_source(const Dataset& ds, const std::string& grammar, const std::string& classifier_path,
                              std::uint64_t train_seed, const fs::path& save_as, std::ostream& err) {
  LabelSource s;
  if (!grammar.empty()) {
    s.grammar = TemplateGrammar::by_name(grammar);
    if (!(s.grammar->schema() == ds.schema)) throw ConfigError("grammar '" + grammar + "' does not match the data schema");
    s.labeler = grammar_labeler(*s.grammar, ds.vocab);
    s.description = "grammar oracle " + grammar;
    return s;
  }
  if (!classifier_path.empty()) {
    s.classifier = std::make_shared<AttributeClassifier>(AttributeClassifier::load(classifier_path));
    s.description = "classifier " + classifier_path;
  } else {
    ClassifierConfig cc;
    cc.seed = train_seed;
    s.classifier = std::make_shared<AttributeClassifier>(
        train_attribute_classifier(ds.train, ds.valid, ds.vocab.size(), cc));
    err << "classifier (seed " << train_seed << ") held-out accuracy " << s.classifier->held_out_accuracy() << "\n";
    if (!save_as.empty()) s.classifier->save(save_as);
    s.description = "classifier trained with seed " + std::to_string(train_seed);
  }
  if (!(s.classifier->schema() == ds.schema)) throw ConfigError("classifier schema does not match the data schema");
  s.labeler = [clf = s.classifier](std::span<const TokenSequence> xs) { return classifier_labeler(*clf)(xs); };
  return s;
}

template <typename Scalar>
FitResult train_and_save(const Dataset& ds, const TrainConfig& cfg, const Labeler& label, const std::string& init,
                         const fs::path& out, std::ostream& err) {
  auto m = make_model<Scalar>(cfg, ds.vocab, ds.train);
  if (!init.empty()) {
    auto pre = TransferModel<Scalar>::load(init);
    if (pre.vocab.tokens().size() != m.vocab.tokens().size() || !(pre.schema == m.schema)) {
      throw ConfigError("--init checkpoint was built for a different vocabulary or schema");
    }
    pre.max_len = m.max_len;
    m = std::move(pre);
  }
  auto res = fit(m, ds.train, ds.valid, cfg, label, [&](const ValidationRecord& r) {
    err << "step " << r.step << "  acc " << r.attribute_accuracy << "  bleu1 " << r.content_bleu << "  recon "
        << r.recon_loss << "\n";
  });
  m.save(out / "model.ckpt");
  return res;
}

int cmd_make_synth(const std::string& grammar, int n, const Common& c, Manifest& man) {
  auto t0 = std::chrono::steady_clock::now();
  auto g = TemplateGrammar::by_name(grammar);
  std::uint64_t seed = c.seed.value_or(1);
  auto sents = g.generate(n, seed);
  write_dataset(c.out, g.schema(), sents);
  man.seed(seed);
  man.j["grammar"] = grammar;
  man.phase("generate", seconds_since(t0));
  for (auto f : {"corpus.tsv", "schema.txt", "vocab.txt", "train.tsv", "valid.tsv", "test.tsv"}) {
    man.output(fs::path(c.out) / f);
  }
  return 0;
}

// Rebuilds the argument list recorded in a manifest, pointing the config at
// the resolved copy and the output at `out`.
std::vector<std::string> manifest_args(const fs::path& path, const std::string& out) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  json j = json::parse(in);
  auto args = j.at("args").get<std::vector<std::string>>();
  std::vector<std::string> kept{"attrgen"};
  bool has_config = j.contains("config");
  const fs::path cwd = j.value("cwd", fs::current_path().string());
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    bool drop_value = a == "--out" || (has_config && (a == "--config" || a == "--set" || a == "--seed"));
    if (drop_value) {
      ++i;
      continue;
    }
    kept.push_back(a);
    bool path_value = a == "--data" || a == "--init" || a == "--classifier" || a == "--ckpt" || a == "--tsv" ||
                      a == "--lm" || a == "--pairs";
    if (path_value && i + 1 < args.size()) {
      fs::path v = args[++i];
      kept.push_back((v.is_absolute() ? v : cwd / v).string());
    }
  }
  fs::create_directories(out);
  if (has_config) {
    auto cfg_path = fs::path(out) / "config_from_manifest.txt";
    std::ofstream os(cfg_path);
    os << j.at("config").get<std::string>();
    kept.push_back("--config");
    kept.push_back(cfg_path.string());
  }
  kept.push_back("--out");
  kept.push_back(out);
  return kept;
}

std::vector<TokenSequence> read_sentences(std::istream& in, const Vocabulary& vocab) {
  std::vector<TokenSequence> xs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto ids = vocab.encode(line);
    if (ids.empty()) continue;
    xs.push_back(TokenSequence::from_content(ids));
  }
  return xs;
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args = args_in;
  if (args.empty()) args.push_back("attrgen");

  CLI::App app{"attribute-conditioned sentence rewriting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  std::string grammar = "sentiment";
  int n = 10000;
  int n_pairs = 0;
  auto* make_synth = app.add_subcommand("make-synth", "write a synthetic corpus with exact labels");
  make_synth->add_option("--grammar", grammar, "sentiment, multi or diglossia")->capture_default_str();
  make_synth->add_option("--n", n, "number of sentences")->capture_default_str()->check(CLI::PositiveNumber);
  make_synth->add_option("--pairs", n_pairs, "also write pairs.tsv with this many rule-rewritten training pairs");
  add_common(make_synth, common, false);

  std::string from_manifest;
  auto add_rerun = [&](CLI::App* verb) {
    verb->add_option("--from-manifest", from_manifest, "rerun the experiment recorded in this manifest into --out");
  };
  add_rerun(make_synth);

  std::string data, init, label_grammar, classifier;
  auto* train = app.add_subcommand("train", "train a model and select a checkpoint on validation data");
  train->add_option("--data", data, "data directory from make-synth (required unless --from-manifest)");
  train->add_option("--init", init, "start from this checkpoint");
  train->add_option("--grammar", label_grammar, "use the grammar oracle as validation labeler");
  train->add_option("--classifier", classifier, "validation classifier file");
  add_rerun(train);
  add_common(train, common, true);

  std::string ckpt, labels, mode = "greedy", input;
  auto* generate = app.add_subcommand("generate", "rewrite sentences toward target labels");
  generate->add_option("--ckpt", ckpt, "model checkpoint")->required();
  generate->add_option("--labels", labels, "target labels attr=value,...; unnamed attributes keep the input's")
      ->required();
  generate->add_option("--mode", mode, "greedy or multinomial")->check(CLI::IsMember({"greedy", "multinomial"}));
  generate->add_option("--input", input, "sentence file (default stdin)");
  generate->add_option("--grammar", label_grammar, "infer unnamed input labels with this grammar oracle");
  generate->add_option("--classifier", classifier, "infer unnamed input labels with this classifier");
  add_common(generate, common, false);

  std::string tsv, lm_path;
  bool corpus_level = false;
  auto* evaluate = app.add_subcommand("evaluate", "attribute accuracy, content BLEU and fluency");
  auto* ev_ckpt = evaluate->add_option("--ckpt", ckpt, "model checkpoint");
  auto* ev_tsv = evaluate->add_option("--tsv", tsv, "pre-generated rows input<TAB>output<TAB>attr=label...");
  ev_ckpt->excludes(ev_tsv);
  evaluate->add_option("--data", data, "data directory (test split scored, train split for oracles)");
  evaluate->add_option("--classifier", classifier, "evaluation classifier file (trained when absent)");
  evaluate->add_option("--lm", lm_path, "fluency language model file (trained when absent)");
  evaluate->add_option("--grammar", label_grammar, "also report grammar-oracle accuracy");
  evaluate->add_flag("--corpus-bleu", corpus_level, "corpus-level instead of sentence-averaged BLEU");
  add_rerun(evaluate);
  add_common(evaluate, common, true);

  std::string grid = "full";
  auto* ablate = app.add_subcommand("ablate", "train every loss configuration and write their histories");
  ablate->add_option("--data", data, "data directory");
  ablate->add_option("--grid", grid, "full or a comma-separated list of ae,int,ae_adv,ae_bt_adv,int_adv")
      ->capture_default_str();
  ablate->add_option("--grammar", label_grammar, "use the grammar oracle as validation labeler");
  ablate->add_option("--classifier", classifier, "validation classifier file");
  add_rerun(ablate);
  add_common(ablate, common, true);

  std::string pairs;
  bool ignore_labels = false;
  auto* pretrain = app.add_subcommand("pretrain", "supervised sequence-to-sequence training on paired data");
  pretrain->add_option("--pairs", pairs, "rows source<TAB>target<TAB>attr=label...");
  pretrain->add_option("--data", data, "data directory providing schema and vocabulary");
  pretrain->add_flag("--ignore-labels", ignore_labels, "decoder does not see the target labels");
  add_rerun(pretrain);
  add_common(pretrain, common, true);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  auto* verb = app.get_subcommands().front();
  try {
    if (!from_manifest.empty()) {
      auto re = manifest_args(from_manifest, common.out);
      if (re.size() < 2 || re[1] != verb->get_name()) {
        throw UsageError("manifest " + from_manifest + " records a different verb");
      }
      return run(re, in, out, err);
    }
    if (verb != make_synth && verb != generate && data.empty()) throw UsageError(verb->get_name() + " needs --data");
    if (verb == pretrain && pairs.empty()) throw UsageError("pretrain needs --pairs");
    Manifest man(verb->get_name(), args);
    const fs::path out_dir = common.out;
    fs::create_directories(out_dir);

    if (verb == make_synth) {
      cmd_make_synth(grammar, n, common, man);
      if (n_pairs > 0) {
        auto ds = load_dataset(out_dir);
        auto g = TemplateGrammar::by_name(grammar);
        Rng rng(common.seed.value_or(1) + 1);
        std::ofstream os(out_dir / "pairs.tsv");
        for (int i = 0; i < n_pairs && static_cast<std::size_t>(i) < ds.train.size(); ++i) {
          const auto& e = ds.train.examples[static_cast<std::size_t>(i)];
          auto target = sample_mismatched_labels(e.labels, ds.schema, rng);
          std::string src = ds.vocab.decode(e.tokens.ids);
          os << src << '\t' << g.rule_transfer(src, target) << '\t' << format_label_assignment(target, ds.schema)
             << '\n';
        }
        man.output(out_dir / "pairs.tsv");
      }
      man.write(out_dir);
      return 0;
    }

    if (verb == train) {
      auto cfg = resolve_config(common);
      man.config(cfg);
      auto t0 = std::chrono::steady_clock::now();
      auto ds = load_dataset(data);
      man.phase("load", seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      auto ls = make_label_source(ds, label_grammar, classifier, kValidationClassifierSeed,
                                  out_dir / "valid_classifier.bin", err);
      man.j["validation_labeler"] = ls.description;
      man.phase("validation_classifier", seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      auto res = cfg.precision == "f32" ? train_and_save<float>(ds, cfg, ls.labeler, init, out_dir, err)
                                        : train_and_save<double>(ds, cfg, ls.labeler, init, out_dir, err);
      man.phase("fit", seconds_since(t0));
      write_history(out_dir / "history.csv", res.history);
      {
        std::ofstream os(out_dir / "config.txt");
        os << cfg.to_string();
      }
      man.j["best_step"] = res.best_step;
      man.j["best_validation_accuracy"] = res.best_accuracy;
      for (auto f : {"model.ckpt", "history.csv", "config.txt"}) man.output(out_dir / f);
      man.write(out_dir);
      out << "selected step " << res.best_step << " (validation accuracy " << res.best_accuracy << ")\n";
      return 0;
    }

    if (verb == generate) {
      if (!fs::exists(ckpt)) throw UsageError("checkpoint '" + ckpt + "' does not exist");
      auto t0 = std::chrono::steady_clock::now();
      auto model = TransferModel<double>::load(ckpt);
      std::vector<TokenSequence> xs;
      if (input.empty()) {
        xs = read_sentences(in, model.vocab);
      } else {
        std::ifstream f(input);
        if (!f) throw InputError("cannot open " + input);
        xs = read_sentences(f, model.vocab);
      }
      std::vector<std::optional<AttributeVector>> own(xs.size());
      if (!label_grammar.empty()) {
        own = grammar_labeler(TemplateGrammar::by_name(label_grammar), model.vocab)(xs);
      } else if (!classifier.empty()) {
        auto clf = AttributeClassifier::load(classifier);
        own = classifier_labeler(clf)(xs);
      }
      std::vector<AttributeVector> targets;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const AttributeVector* fb = own[i] ? &*own[i] : nullptr;
        targets.push_back(parse_label_assignment(labels, model.schema, fb));
      }
      auto sm = mode == "multinomial" ? SampleMode::multinomial : SampleMode::greedy;
      std::uint64_t seed = common.seed.value_or(0);
      auto ys = model.rewrite(xs, targets, sm, seed);
      for (const auto& y : ys) out << model.vocab.decode(y.ids) << "\n";
      man.seed(seed);
      man.phase("generate", seconds_since(t0));
      man.j["sentences"] = xs.size();
      man.write(out_dir);
      return 0;
    }

    if (verb == evaluate) {
      if (ckpt.empty() && tsv.empty()) throw UsageError("evaluate needs --ckpt or --tsv");
      if (!ckpt.empty() && !fs::exists(ckpt)) throw UsageError("checkpoint '" + ckpt + "' does not exist");
      std::uint64_t seed = common.seed.value_or(7);
      man.seed(seed);
      auto t0 = std::chrono::steady_clock::now();
      auto ds = load_dataset(data);
      if (ds.test.empty()) throw InputError(data + ": no test split");
      auto ls = make_label_source(ds, "", classifier, kEvaluationClassifierSeed,
                                  classifier.empty() ? out_dir / "eval_classifier.bin" : fs::path{}, err);
      man.phase("classifier", seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      FluencyLM lm;
      if (!lm_path.empty()) {
        lm = FluencyLM::load(lm_path);
      } else {
        lm = train_fluency_lm(ds.train, ds.valid, ds.vocab.size(), LmConfig{});
        lm.save(out_dir / "fluency_lm.bin");
      }
      man.phase("language_model", seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      MetricReport report;
      std::optional<TemplateGrammar> g;
      if (!label_grammar.empty()) g = TemplateGrammar::by_name(label_grammar);
      std::optional<AccuracyResult> oracle;
      if (!ckpt.empty()) {
        auto model = TransferModel<double>::load(ckpt);
        auto rw = model_rewriter(model);
        report = attrgen::evaluate(rw, ds.test, ls.labeler, lm, seed, ContentOptions{corpus_level});
        if (g) oracle = attribute_accuracy(rw, ds.test, grammar_labeler(*g, ds.vocab), seed);
      } else {
        std::ifstream f(tsv);
        if (!f) throw InputError("cannot open " + tsv);
        std::vector<TokenSequence> xs, ys;
        std::vector<AttributeVector> targets;
        std::string line;
        std::size_t no = 0;
        while (std::getline(f, line)) {
          ++no;
          if (line.empty()) continue;
          std::vector<std::string> cols;
          std::stringstream ss(line);
          for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
          if (cols.size() < 3) throw ParseError(tsv, no, "expected input, output and labels");
          std::string lab;
          for (std::size_t i = 2; i < cols.size(); ++i) lab += (i > 2 ? "," : "") + cols[i];
          auto a = ds.vocab.encode(cols[0]);
          auto b = ds.vocab.encode(cols[1]);
          if (a.empty() || b.empty()) throw ParseError(tsv, no, "empty sentence");
          xs.push_back(TokenSequence::from_content(a));
          ys.push_back(TokenSequence::from_content(b));
          targets.push_back(parse_label_assignment(lab, ds.schema));
        }
        if (xs.empty()) throw InputError(tsv + ": no rows");
        report = evaluate_outputs(xs, ys, targets, ds.schema, ls.labeler, lm);
        if (g) oracle = score_outputs(ys, targets, ds.schema, grammar_labeler(*g, ds.vocab));
      }
      man.phase("evaluate", seconds_since(t0));
      std::string csv = report.to_csv();
      if (oracle) {
        std::ostringstream os;
        for (int k = 0; k < ds.schema.num_attributes(); ++k) {
          os << "oracle_accuracy," << ds.schema.attribute(k).name << ','
             << oracle->per_attribute[static_cast<std::size_t>(k)] << '\n';
        }
        os << "oracle_accuracy,overall," << oracle->overall << '\n';
        os << "oracle_decidable_rate,overall," << oracle->decidable_rate << '\n';
        csv += os.str();
      }
      {
        std::ofstream os(out_dir / "metrics.csv");
        os << csv;
        std::ofstream ts(out_dir / "metrics.txt");
        ts << report.to_text();
      }
      out << report.to_text();
      if (oracle) out << "oracle accuracy    " << oracle->overall << "\n";
      man.output(out_dir / "metrics.csv");
      man.output(out_dir / "metrics.txt");
      man.write(out_dir);
      return 0;
    }

    if (verb == ablate) {
      auto cfg = resolve_config(common);
      man.config(cfg);
      std::vector<LossConfig> configs;
      if (grid == "full") {
        configs.assign(std::begin(kAllLossConfigs), std::end(kAllLossConfigs));
      } else {
        std::stringstream ss(grid);
        for (std::string name; std::getline(ss, name, ',');) configs.push_back(parse_loss_config(name));
      }
      auto t0 = std::chrono::steady_clock::now();
      auto ds = load_dataset(data);
      auto ls = make_label_source(ds, label_grammar, classifier, kValidationClassifierSeed,
                                  out_dir / "valid_classifier.bin", err);
      man.phase("validation_classifier", seconds_since(t0));
      t0 = std::chrono::steady_clock::now();
      auto runs = cfg.precision == "f32"
                      ? run_ablation_grid<float>(ds.vocab, ds.train, ds.valid, cfg, ls.labeler, out_dir, configs)
                      : run_ablation_grid<double>(ds.vocab, ds.train, ds.valid, cfg, ls.labeler, out_dir, configs);
      man.phase("grid", seconds_since(t0));
      for (const auto& r : runs) {
        man.output(r.csv);
        const auto& h = r.fit.history;
        out << to_string(r.config) << ": final accuracy " << (h.empty() ? 0.0 : h.back().attribute_accuracy)
            << ", content BLEU-1 " << (h.empty() ? 0.0 : h.back().content_bleu) << "\n";
      }
      man.write(out_dir);
      return 0;
    }

    if (verb == pretrain) {
      auto cfg = resolve_config(common);
      if (ignore_labels) cfg.ignore_labels = true;
      man.config(cfg);
      auto t0 = std::chrono::steady_clock::now();
      auto ds = load_dataset(data);
      auto ps = load_pairs(pairs, ds.schema, ds.vocab);
      auto m = make_model<double>(cfg, ds.vocab, ds.train);
      auto r = pretrain_supervised(std::span<const PairedExample>(ps), m, cfg, cfg.max_steps);
      m.save(out_dir / "model.ckpt");
      {
        std::ofstream os(out_dir / "config.txt");
        os << cfg.to_string();
      }
      man.phase("pretrain", seconds_since(t0));
      man.j["first_loss"] = r.first_loss;
      man.j["final_loss"] = r.final_loss;
      man.output(out_dir / "model.ckpt");
      man.write(out_dir);
      out << "pretrained " << r.steps << " steps, loss " << r.first_loss << " -> " << r.final_loss << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << verb->help();
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(const std::vector<std::string>& args) { return run(args, std::cin, std::cout, std::cerr); }

}  // namespace attrgen
