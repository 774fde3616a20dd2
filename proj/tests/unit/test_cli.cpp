#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrgen/cli.hpp"

using namespace attrgen;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "attrgen");
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  int code = run(args, in, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / "attrgen_cli" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::vector<std::string> kTinyTrain = {
    "--grammar", "sentiment",          "--set", "max_steps=30", "--set", "valid_interval=15",
    "--set",     "valid_samples=20",   "--set", "warmup_steps=10", "--set", "batch_size=8",
    "--set",     "d_emb=8",            "--set", "d_enc=8",      "--set", "d_dec=10",
    "--set",     "d_disc=6"};

}  // namespace

TEST_CASE("help and version exit cleanly") {
  auto h = call({"--help"});
  CHECK(h.code == 0);
  for (auto verb : {"make-synth", "train", "generate", "evaluate", "ablate", "pretrain"})
    CHECK(h.out.find(verb) != std::string::npos);
  auto v = call({"train", "--help"});
  CHECK(v.code == 0);
  CHECK(v.out.find("--from-manifest") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with the verb's usage") {
  auto none = call({});
  CHECK(none.code == 1);
  auto unknown = call({"train", "--data", ".", "--bogus"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  auto missing = call({"generate", "--ckpt", "/nonexistent/model.ckpt", "--labels", "sentiment=positive"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("does not exist") != std::string::npos);
  CHECK(missing.err.find("Usage") != std::string::npos);
  CHECK(call({"train"}).code == 1);
  CHECK(call({"pretrain", "--data", "."}).code == 1);
  CHECK(call({"train", "--data", ".", "--set", "nokey"}).code == 1);
}

TEST_CASE("runtime failures exit 2") {
  auto dir = scratch("runtime");
  auto r = call({"train", "--data", (dir / "missing").string(), "--grammar", "sentiment", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("make-synth, train, generate and evaluate") {
  auto data = scratch("data");
  auto run_dir = scratch("run");
  REQUIRE(call({"make-synth", "--grammar", "sentiment", "--n", "400", "--seed", "3", "--pairs", "20", "--out",
                data.string()})
              .code == 0);
  for (auto f : {"schema.txt", "vocab.txt", "train.tsv", "valid.tsv", "test.tsv", "pairs.tsv", "manifest.json"})
    CHECK(fs::exists(data / f));

  std::vector<std::string> targs{"train", "--data", data.string(), "--out", run_dir.string()};
  targs.insert(targs.end(), kTinyTrain.begin(), kTinyTrain.end());
  auto t = call(targs);
  REQUIRE_MESSAGE(t.code == 0, t.err);
  for (auto f : {"model.ckpt", "history.csv", "config.txt", "manifest.json"}) CHECK(fs::exists(run_dir / f));
  CHECK(slurp(run_dir / "history.csv").rfind(kHistoryHeader, 0) == 0);

  auto g = call({"generate", "--ckpt", (run_dir / "model.ckpt").string(), "--labels", "sentiment=positive", "--out",
                 (run_dir / "gen").string()},
                "the food was bad\nthe staff were rude\n");
  REQUIRE_MESSAGE(g.code == 0, g.err);
  CHECK(std::count(g.out.begin(), g.out.end(), '\n') == 2);

  auto e = call({"evaluate", "--ckpt", (run_dir / "model.ckpt").string(), "--data", data.string(), "--grammar",
                 "sentiment", "--out", (run_dir / "eval").string()});
  // the tiny corpus may not clear the classifier gate; either way the failure is reported, not crashed through
  CHECK((e.code == 0 || e.code == 2));
  if (e.code == 2) CHECK(e.err.find("classifier") != std::string::npos);

  auto p = call({"pretrain", "--data", data.string(), "--pairs", (data / "pairs.tsv").string(), "--out",
                 (run_dir / "pre").string(), "--set", "max_steps=5", "--set", "d_emb=8", "--set", "d_enc=8",
                 "--set", "d_dec=10"});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  CHECK(fs::exists(run_dir / "pre" / "model.ckpt"));
}

TEST_CASE("a manifest rerun reproduces the training history") {
  auto data = scratch("mdata");
  auto a = scratch("ma");
  auto b = scratch("mb");
  REQUIRE(call({"make-synth", "--grammar", "sentiment", "--n", "300", "--seed", "9", "--out", data.string()})
              .code == 0);
  std::vector<std::string> targs{"train", "--data", data.string(), "--out", a.string()};
  targs.insert(targs.end(), kTinyTrain.begin(), kTinyTrain.end());
  REQUIRE(call(targs).code == 0);
  auto re = call({"train", "--from-manifest", (a / "manifest.json").string(), "--out", b.string()});
  REQUIRE_MESSAGE(re.code == 0, re.err);
  CHECK(slurp(a / "history.csv") == slurp(b / "history.csv"));
  CHECK(slurp(a / "config.txt") == slurp(b / "config.txt"));

  auto wrong = call({"ablate", "--from-manifest", (a / "manifest.json").string(), "--out", b.string()});
  CHECK(wrong.code == 1);
}
