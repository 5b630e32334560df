#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "progrow/checkpoint.hpp"

namespace progrow {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Twelve tiny layers, shared FFN and pooling so unshare and unpool apply.
constexpr const char* kTwelveLayers = R"({
  "model": {"L": 12, "D": 8, "H": 16, "M": 2, "N_max": 16, "V": 12,
            "dropout": 0.0, "ffn": "shared:2", "pool_k": 2},
  "data": {"corpus_size": 16, "heldout_size": 4, "seq_len_full": 16, "masks": 3},
  "schedule": [{"steps": 6, "batch": 2}, {"steps": 6, "ops": "unshare,unpool", "batch": 2}],
  "optimizer": {"peak_lr": 1e-3, "warmup": 2},
  "train": {"seed": 3, "log_interval": 2}
})";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("progrow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "twelve.json") << kTwelveLayers;
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string config() const { return (root_ / "twelve.json").string(); }

  fs::path init_checkpoint() {
    const Result r = run_cli({"train", "-c", config(), "-o", (root_ / "run").string(), "--init-only"});
    EXPECT_EQ(r.code, 0) << r.err;
    return root_ / "run" / "checkpoints" / "init";
  }

  fs::path root_;
};

TEST_F(CliTest, PlanReportsStackingSpeedup) {
  const Result r = run_cli({"plan", "-c", "preset:stack_base", "--overhead", "off"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("speedup: +73.9%"), std::string::npos) << r.out;

  const Result j = run_cli({"plan", "-c", std::string(PROGROW_CONFIG_DIR) + "/stack_base.json", "--json"});
  ASSERT_EQ(j.code, 0) << j.err;
  const auto doc = nlohmann::json::parse(j.out);
  EXPECT_NEAR(doc.at("speedup").get<double>(), 0.6551, 5e-4);
}

TEST_F(CliTest, FlopsTableHasOneRowPerStage) {
  const Result r = run_cli({"flops", "-c", "preset:compound_base", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc.at("stages").size(), 4u);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"plan"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"verify", "--ckpt", "x"}).code, cli::kExitUsage);
  const Result r = run_cli({"grow", "--ckpt", "x", "--op", "stack:", "-o", "y"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("usage error"), std::string::npos);
}

TEST_F(CliTest, ValidationFailuresExitOne) {
  const Result r = run_cli({"plan", "-c", (root_ / "missing.json").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("missing.json"), std::string::npos);
  EXPECT_EQ(run_cli({"eval", "--ckpt", (root_ / "nothing").string(), "-c", config()}).code,
            cli::kExitFailure);
}

TEST_F(CliTest, GrowStacksTwelveToTwentyFour) {
  const fs::path init = init_checkpoint();
  const fs::path grown = root_ / "grown";
  const Result r = run_cli({"grow", "--ckpt", init.string(), "--op", "stack:24", "-o", grown.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("L=24"), std::string::npos) << r.out;

  const TrainState before = load_checkpoint(init);
  const TrainState after = load_checkpoint(grown);
  ASSERT_EQ(after.params.layers.size(), 24u);
  EXPECT_EQ(after.phase, CheckpointPhase::kPostGrowth);
  for (std::size_t l = 0; l < 24; ++l) {
    const auto& src = before.params.layers[l % 12];
    const auto& dst = after.params.layers[l];
    EXPECT_TRUE(dst.w_q.bit_equal(src.w_q)) << l;
    EXPECT_TRUE(dst.w1.bit_equal(src.w1)) << l;
    EXPECT_TRUE(dst.ffn_ln_gain.bit_equal(src.ffn_ln_gain)) << l;
  }
  EXPECT_TRUE(after.params.layers[12].w_v2_t.bit_equal(after.params.layers[0].w_v2_t));
}

TEST_F(CliTest, VerifyUnsharePassesAndStackIsReportOnly) {
  const fs::path init = init_checkpoint();
  const Result ok = run_cli({"verify", "--ckpt", init.string(), "--op", "unshare"});
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_NE(ok.out.find("result: pass"), std::string::npos) << ok.out;

  const Result stack = run_cli({"verify", "--ckpt", init.string(), "--op", "stack:24", "--json"});
  EXPECT_EQ(stack.code, cli::kExitOk);  // report-only is not a failure
  EXPECT_EQ(nlohmann::json::parse(stack.out).at("result"), "report-only");
}

TEST_F(CliTest, TrainWritesLogsCheckpointsAndEval) {
  const fs::path run = root_ / "run";
  const Result r = run_cli({"train", "-c", config(), "-o", run.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("held-out loss"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(run / "loss.csv"));
  for (const char* label : {"init", "stage1_pre", "stage1_post", "final"}) {
    EXPECT_TRUE(fs::exists(run / "checkpoints" / label / kManifestFile)) << label;
  }
  const Result e =
      run_cli({"eval", "--ckpt", (run / "checkpoints" / "final").string(), "-c", config(), "--json"});
  ASSERT_EQ(e.code, 0) << e.err;
  const double loss = nlohmann::json::parse(e.out).at("heldout_loss").get<double>();
  EXPECT_GT(loss, 0.0);
  EXPECT_LT(loss, 5.0);
}

}  // namespace
}  // namespace progrow
