#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.h"
#include "triggerlab/cli/commands.h"
#include "triggerlab/common.h"

namespace triggerlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using triggerlab::testing::scratch_dir;
using triggerlab::testing::testdata;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "triggerlab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json fixture_config() {
  return {{"paths",
           {{"train", testdata("fixture9.jsonl").string()},
            {"validation", testdata("fixture9.jsonl").string()}}},
          {"model", {{"embed_dim", 4}, {"hidden_dim", 4}, {"min_count", 1}}},
          {"train", {{"epochs", 1}, {"batch_size", 4}}},
          {"pipeline", {{"n_per_class", 2}, {"n_total", 6}, {"num_random_triggers", 3}}}};
}

json planted_config() {
  return {{"seed", 1},
          {"model", {{"embed_dim", 16}, {"hidden_dim", 32}, {"min_count", 3}}},
          {"train", {{"epochs", 10}, {"batch_size", 32}, {"learning_rate", 0.003}}},
          {"finetune", {{"epochs", 1}, {"batch_size", 32}, {"learning_rate", 0.003}}},
          {"pipeline", {{"n_per_class", 1000}, {"n_total", 6000}, {"num_random_triggers", 6}}},
          {"synthetic",
           {{"examples_per_class", 3000},
            {"validation_per_class", 1000},
            {"rules",
             {{{"token", "nobody"}, {"label", "contradiction"}, {"probability", 0.95}},
              {{"token", "joyously"}, {"label", "neutral"}, {"probability", 0.95}},
              {{"token", "outdoors"}, {"label", "entailment"}, {"probability", 0.95}}}}}}};
}

json read_json_file(const fs::path& p) { return json::parse(read_file(p)); }

TEST(Cli, TrainOnFixture) {
  auto dir = scratch_dir("cli_train");
  auto cfg = write_config(dir, fixture_config());
  auto r = run({"train", "--config", cfg.string(), "--out-dir", (dir / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  ASSERT_TRUE(fs::exists(dir / "run" / "checkpoint.json"));
  ASSERT_TRUE(fs::exists(dir / "run" / "vocab.json"));
  auto history = read_json_file(dir / "run" / "train_history.json");
  EXPECT_EQ(history.at("epochs").size(), 1u);
  EXPECT_EQ(history.at("provenance").at("seed"), 13);
  EXPECT_TRUE(history.at("provenance").at("config").is_object());

  const std::string first = read_file(dir / "run" / "checkpoint.json");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out-dir", (dir / "run").string()}).code,
            kExitOk);
  EXPECT_EQ(read_file(dir / "run" / "checkpoint.json"), first);
}

TEST(Cli, FlagsWinOverConfig) {
  auto dir = scratch_dir("cli_flags");
  auto cfg = write_config(dir, fixture_config());
  auto r = run({"train", "--config", cfg.string(), "--out-dir", (dir / "run").string(),
                "--seed", "99", "--epochs", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto history = read_json_file(dir / "run" / "train_history.json");
  EXPECT_EQ(history.at("epochs").size(), 2u);
  EXPECT_EQ(history.at("provenance").at("seed"), 99);
}

TEST(Cli, MissingCorpusWritesNothing) {
  auto dir = scratch_dir("cli_missing");
  json c = fixture_config();
  c["paths"]["train"] = (dir / "absent.jsonl").string();
  auto cfg = write_config(dir, c);
  auto r = run({"train", "--config", cfg.string(), "--out-dir", (dir / "run").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir / "run"));
  auto err = json::parse(r.err);
  EXPECT_EQ(err.at("error").at("kind"), "config");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--config", "/nonexistent/config.json"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  auto dir = scratch_dir("cli_badjson");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(run({"report", "--config", (dir / "bad.json").string()}).code, kExitUsage);
}

TEST(Cli, CorruptedCheckpointIsRuntimeFailure) {
  auto dir = scratch_dir("cli_corrupt");
  auto cfg = write_config(dir, fixture_config());
  const std::string run_dir = (dir / "run").string();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out-dir", run_dir}).code, kExitOk);
  const std::string text = read_file(dir / "run" / "checkpoint.json");
  std::ofstream(dir / "run" / "checkpoint.json") << text.substr(0, text.size() / 3);
  auto r = run({"attack", "--config", cfg.string(), "--out-dir", run_dir, "--mode", "random"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_FALSE(fs::exists(dir / "run" / "random_triggers.json"));
}

TEST(Cli, AttackModes) {
  auto dir = scratch_dir("cli_attack");
  auto cfg = write_config(dir, fixture_config());
  const std::string run_dir = (dir / "run").string();
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out-dir", run_dir}).code, kExitOk);

  auto same = run({"attack", "--config", cfg.string(), "--out-dir", run_dir, "--class",
                   "neutral", "--mode", "targeted", "--target", "neutral"});
  EXPECT_EQ(same.code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir / "run" / "trigger_neutral.json"));

  auto random = run({"attack", "--config", cfg.string(), "--out-dir", run_dir, "--mode",
                     "random", "--count", "4"});
  ASSERT_EQ(random.code, kExitOk) << random.err;
  auto list = read_json_file(dir / "run" / "random_triggers.json");
  EXPECT_EQ(list.at("triggers").size(), 4u);

  auto targeted = run({"attack", "--config", cfg.string(), "--out-dir", run_dir, "--class",
                       "entailment", "--mode", "targeted", "--target", "contradiction"});
  ASSERT_EQ(targeted.code, kExitOk) << targeted.err;
  auto t = read_json_file(dir / "run" / "trigger_entailment.json");
  EXPECT_FALSE(t.at("loss_trace").empty());
  EXPECT_EQ(t.at("vocab_hash").get<std::string>().size(), 64u);
  EXPECT_EQ(t.at("model_checkpoint_hash"), sha256_file(dir / "run" / "checkpoint.json"));
  EXPECT_EQ(t.at("provenance").at("seed"), 13);

  EXPECT_EQ(run({"attack", "--config", cfg.string(), "--out-dir", run_dir}).code, kExitUsage);
  EXPECT_EQ(run({"attack", "--config", cfg.string(), "--out-dir", run_dir, "--class", "maybe"})
                .code,
            kExitUsage);
}

TEST(Cli, AnalyzeMatchesHandCounts) {
  auto dir = scratch_dir("cli_analyze");
  auto cfg = write_config(dir, fixture_config());
  auto r = run({"analyze", "--config", cfg.string(), "--out-dir", (dir / "run").string(),
                "--k", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto report = read_json_file(dir / "run" / "correlation_report.json");
  // "nobody" appears in two contradiction hypotheses and nowhere else.
  bool found = false;
  for (const auto& row : report.at("classes").at("contradiction").at("top")) {
    if (row.at("word") == "nobody") {
      found = true;
      EXPECT_EQ(row.at("score"), 1.0);
      EXPECT_EQ(row.at("count"), 2);
    }
  }
  EXPECT_TRUE(found);
  for (const auto& [name, cls] : report.at("classes").items()) {
    EXPECT_LE(cls.at("top").size(), 2u);
  }
  EXPECT_NE(r.out.find("nobody"), std::string::npos);
  EXPECT_EQ(run({"analyze", "--config", cfg.string(), "--out-dir", (dir / "run").string(),
                 "--side", "sideways"})
                .code,
            kExitUsage);
}

TEST(Cli, StandaloneStagesCompose) {
  auto dir = scratch_dir("cli_stages");
  auto cfg = write_config(dir, fixture_config());
  const std::string run_dir = (dir / "run").string();
  auto base = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"--config", cfg.string(), "--out-dir", run_dir};
    extra.insert(extra.end(), args.begin(), args.end());
    return run(extra);
  };
  ASSERT_EQ(base({"train"}).code, kExitOk);
  for (const char* cls : {"entailment", "neutral", "contradiction"}) {
    ASSERT_EQ(base({"attack", "--class", cls}).code, kExitOk);
  }
  ASSERT_EQ(base({"attack", "--mode", "random"}).code, kExitOk);
  auto sets = base({"build-sets"});
  ASSERT_EQ(sets.code, kExitOk) << sets.err;
  auto meta = read_json_file(dir / "run" / "datasets.json");
  EXPECT_EQ(meta.at("datasets").at("challenge_universal").at("size"), 6);
  EXPECT_EQ(meta.at("datasets").at("trigger_augmented").at("size"), 6);
  auto eval = base({"evaluate", "--dataset", (dir / "run" / "challenge_universal.jsonl").string(),
                    "--name", "chal"});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "eval_chal.json"));
  EXPECT_EQ(base({"evaluate", "--dataset", testdata("fixture9.jsonl").string(), "--name",
                  "../escape"})
                .code,
            kExitUsage);
  auto inoc = base({"inoculate"});
  ASSERT_EQ(inoc.code, kExitOk) << inoc.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint_finetuned.json"));
  auto report = base({"report"});
  ASSERT_EQ(report.code, kExitOk) << report.err;
  EXPECT_NE(report.out.find("chal"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "run" / "report.txt"));
}

TEST(Cli, PlantedPipelineEndToEnd) {
  auto dir = scratch_dir("cli_pipeline");
  auto cfg = write_config(dir, planted_config());
  auto a = run({"pipeline", "--config", cfg.string(), "--out-dir", (dir / "a").string()});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  auto manifest = read_json_file(dir / "a" / "manifest.json");
  EXPECT_EQ(manifest.at("status"), "complete");
  EXPECT_EQ(manifest.at("outcome").at("overall").at("outcome"), "ReducedGap");
  for (const auto& stage : manifest.at("stages")) {
    for (const auto& art : stage.at("artifacts")) {
      EXPECT_EQ(art.at("sha256"), sha256_file(dir / "a" / art.at("path").get<std::string>()));
    }
  }
  // The entailment trigger is one of the planted giveaway words.
  auto trig = read_json_file(dir / "a" / "trigger_entailment.json");
  const std::string token = trig.at("tokens")[0];
  EXPECT_TRUE(token == "nobody" || token == "joyously") << token;

  auto b = run({"pipeline", "--config", cfg.string(), "--out-dir", (dir / "b").string()});
  ASSERT_EQ(b.code, kExitOk);
  EXPECT_EQ(read_file(dir / "a" / "manifest.json"), read_file(dir / "b" / "manifest.json"));
  EXPECT_EQ(manifest.dump().find(dir.string()), std::string::npos);
}

TEST(Cli, FailedStageLeavesPartialManifest) {
  auto dir = scratch_dir("cli_fail");
  json c = fixture_config();
  c["pipeline"]["n_per_class"] = 50;  // more than the fixture holds
  auto cfg = write_config(dir, c);
  auto r = run({"pipeline", "--config", cfg.string(), "--out-dir", (dir / "run").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("build-sets"), std::string::npos);
  auto manifest = read_json_file(dir / "run" / "manifest.json");
  EXPECT_EQ(manifest.at("status"), "failed");
  EXPECT_EQ(manifest.at("failed_stage"), "build-sets");
  ASSERT_EQ(manifest.at("stages").size(), 2u);
  EXPECT_EQ(manifest.at("stages")[0].at("name"), "train");
  EXPECT_EQ(manifest.at("stages")[1].at("name"), "attack");
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "trigger_neutral.json"));
}

}  // namespace
}  // namespace triggerlab::cli
