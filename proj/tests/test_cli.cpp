#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bmim/cli.hpp"
#include "bmim/training.hpp"

using namespace bmim;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "bmim");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("bmim_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

const std::vector<std::string> kTiny = {"--set", "model.d_w=6", "--set", "model.d=8",     "--set",
                                        "model.d_e=5", "--set", "model.hops=2", "--set", "train.epochs=2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("synth is deterministic") {
  Scratch s("synth");
  REQUIRE(invoke({"synth", "--out", s / "a.jsonl", "--dialogs", "10", "--seed", "1"}).code == cli::kExitOk);
  REQUIRE(invoke({"synth", "--out", s / "b.jsonl", "--dialogs", "10", "--seed", "1"}).code == cli::kExitOk);
  CHECK(slurp(s / "a.jsonl") == slurp(s / "b.jsonl"));
  CHECK(load_dialogs(s / "a.jsonl").size() == 10);
  REQUIRE(invoke({"synth", "--out", s / "c.jsonl", "--dialogs", "10", "--seed", "2"}).code == cli::kExitOk);
  CHECK(slurp(s / "a.jsonl") != slurp(s / "c.jsonl"));

  CHECK(invoke({"synth", "--out", s / "d.jsonl", "--sent-table", "[[1,0]"}).code == cli::kExitConfig);
  CHECK(invoke({"synth", "--out", s / "d.jsonl", "--act-table", "0.5,x"}).code == cli::kExitConfig);
  CHECK(invoke({"synth", "--out", s / "e.jsonl", "--dialogs", "3", "--acts", "2", "--sentiments", "2", "--seed", "4"})
            .code == cli::kExitOk);
  CHECK(load_dialogs(s / "e.jsonl").labels.num_acts() == 2);
}

TEST_CASE("seed falls back to BMIM_SEED") {
  Scratch s("seed");
  ::setenv("BMIM_SEED", "9", 1);
  REQUIRE(invoke({"synth", "--out", s / "env.jsonl", "--dialogs", "4"}).code == 0);
  ::unsetenv("BMIM_SEED");
  REQUIRE(invoke({"synth", "--out", s / "nine.jsonl", "--dialogs", "4", "--seed", "9"}).code == 0);
  REQUIRE(invoke({"synth", "--out", s / "one.jsonl", "--dialogs", "4"}).code == 0);
  CHECK(slurp(s / "env.jsonl") == slurp(s / "nine.jsonl"));
  CHECK(slurp(s / "env.jsonl") != slurp(s / "one.jsonl"));
}

TEST_CASE("train, eval, export and replay") {
  Scratch s("train");
  REQUIRE(invoke({"synth", "--out", s / "train.jsonl", "--dialogs", "12", "--seed", "1"}).code == 0);
  REQUIRE(invoke({"synth", "--out", s / "dev.jsonl", "--dialogs", "4", "--seed", "2"}).code == 0);
  Run t = invoke(with({"train", "--train", s / "train.jsonl", "--dev", s / "dev.jsonl", "--out", s / "ckpt", "--seed", "3"},
                   kTiny));
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(t.err.find("epoch 2") != std::string::npos);
  CHECK(fs::exists(s / "ckpt/config.json"));

  Run e = invoke({"eval", "--ckpt", s / "ckpt", "--data", s / "dev.jsonl", "--out", s / "report.json",
               "--attention-dump", s / "att.json"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(e.out.find("DSC") != std::string::npos);
  auto report = nlohmann::json::parse(slurp(s / "report.json"));
  CHECK(report.contains("combined_f1"));
  CHECK(report["options"]["protocol"] == "dailydialog");
  CHECK(nlohmann::json::parse(slurp(s / "att.json")).size() == 4);

  Run m = invoke({"eval", "--ckpt", s / "ckpt", "--data", s / "dev.jsonl", "--protocol", "mastodon", "--out",
               s / "m.json"});
  REQUIRE(m.code == 0);
  auto mj = nlohmann::json::parse(slurp(s / "m.json"));
  CHECK(mj["dar"]["mode"] == "weighted");
  CHECK(mj["dsc"]["neutral_excluded"] == true);

  REQUIRE(invoke({"export-embeddings", "--ckpt", s / "ckpt", "--out", s / "emb.tsv"}).code == 0);
  CHECK(slurp(s / "emb.tsv").rfind("label\ttask\te0\t", 0) == 0);

  // replay from the snapshot; the snapshot carries seed, widths and data paths
  Run r = invoke({"train", "--config", s / "ckpt/config.json", "--out", s / "replay", "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.err.empty());
  CHECK(slurp(s / "ckpt/history.json") == slurp(s / "replay/history.json"));
  Checkpoint a = load_checkpoint(s / "ckpt"), b = load_checkpoint(s / "replay");
  CHECK(a.arrays == b.arrays);
  Run e2 = invoke({"eval", "--ckpt", s / "replay", "--data", s / "dev.jsonl", "--out", s / "report2.json"});
  REQUIRE(e2.code == 0);
  auto r2 = nlohmann::json::parse(slurp(s / "report2.json"));
  CHECK(r2["dsc"] == report["dsc"]);
  CHECK(r2["dar"] == report["dar"]);
}

TEST_CASE("error exit codes") {
  Scratch s("errors");
  REQUIRE(invoke({"synth", "--out", s / "train.jsonl", "--dialogs", "4", "--seed", "1"}).code == 0);
  CHECK(invoke({}).code == cli::kExitConfig);
  CHECK(invoke({"frobnicate"}).code == cli::kExitConfig);
  CHECK(invoke({"train", "--out", s / "x", "--train", s / "train.jsonl", "--bogus"}).code == cli::kExitConfig);
  Run unknown = invoke({"train", "--out", s / "x", "--train", s / "train.jsonl", "--set", "model.width=4"});
  CHECK(unknown.code == cli::kExitConfig);
  CHECK(unknown.err.find("model.width") != std::string::npos);
  std::ofstream(s / "bad.json") << R"({"model.d": 8, "optim.momentum": 0.9})";
  CHECK(invoke({"train", "--config", s / "bad.json", "--out", s / "x", "--train", s / "train.jsonl"}).code ==
        cli::kExitConfig);
  CHECK(invoke({"train", "--out", s / "x", "--train", s / "missing.jsonl"}).code == cli::kExitData);
  CHECK(invoke({"eval", "--ckpt", s / "nope", "--data", s / "train.jsonl"}).code == cli::kExitData);

  REQUIRE(invoke(with({"train", "--train", s / "train.jsonl", "--out", s / "ckpt", "--quiet"}, kTiny)).code == 0);
  std::ofstream(s / "other.jsonl")
      << R"({"dialog_id": "z", "utterances": [{"speaker": "A", "text": "hi", "sentiment": "furious", "act": "greeting"}]})"
      << "\n";
  Run mismatch = invoke({"eval", "--ckpt", s / "ckpt", "--data", s / "other.jsonl"});
  CHECK(mismatch.code == cli::kExitData);
  CHECK(mismatch.err.find("furious") != std::string::npos);
  CHECK(invoke({"eval", "--ckpt", s / "ckpt", "--data", s / "train.jsonl", "--mode", "micro"}).code ==
        cli::kExitConfig);
}

TEST_CASE("gradcheck exit status follows the threshold") {
  Scratch s("gc");
  Run ok = invoke(with({"gradcheck", "--threshold", "1", "--out", s / "gc.json"}, kTiny));
  CHECK_MESSAGE(ok.code == cli::kExitOk, ok.err);
  auto j = nlohmann::json::parse(slurp(s / "gc.json"));
  CHECK(j["passed"] == true);
  CHECK(j["max_rel_err"].get<double>() < 1.0);
  CHECK(j["coordinates"].get<std::size_t>() > 0);
  Run fail = invoke(with({"gradcheck", "--threshold", "0"}, kTiny));
  CHECK(fail.code == cli::kExitGradcheck);
  CHECK(nlohmann::json::parse(fail.out)["passed"] == false);
}

TEST_CASE("ablate writes a four-row table") {
  Scratch s("ablate");
  REQUIRE(invoke({"synth", "--out", s / "train.jsonl", "--dialogs", "6", "--seed", "1"}).code == 0);
  REQUIRE(invoke({"synth", "--out", s / "test.jsonl", "--dialogs", "3", "--seed", "2"}).code == 0);
  Run a = invoke(with({"ablate", "--train", s / "train.jsonl", "--test", s / "test.jsonl", "--out", s / "ab.json"}, kTiny));
  REQUIRE_MESSAGE(a.code == 0, a.err);
  auto j = nlohmann::json::parse(slurp(s / "ab.json"));
  CHECK(j["rows"].size() == 4);
  CHECK(j["rows"][3]["variant"] == "no_fsn");
  CHECK(invoke(with({"ablate", "--train", s / "train.jsonl", "--test", s / "test.jsonl", "--variants", "no_x"}, kTiny))
            .code == cli::kExitConfig);
}
