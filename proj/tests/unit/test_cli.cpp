// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.push_back("--quiet");
  const int code = ptsc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("ptsc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string& rel) const { return (dir / rel).string(); }

  /// A narrow copy of the amscnn-te preset that trains in well under a second.
  std::string small_config() const {
    json c = json::parse(slurp(fs::path(PTSC_SOURCE_DIR) / "configs" / "amscnn_te.json"));
    const int widths[] = {4, 4, 6, 6, 6, 6};
    for (std::size_t i = 0; i < c["blocks"].size(); ++i) c["blocks"][i]["channels"] = widths[i];
    c["head"]["projection_channels"] = 4;
    c["head"]["hidden_size"] = 4;
    c["classifier_hidden"] = 4;
    c["temporal_encoding"]["channels"] = 2;
    c["name"] = "small";
    std::ofstream(dir / "small.json") << c.dump();
    return p("small.json");
  }

  void make_data() {
    ASSERT_EQ(run({"gen-data", "--seed", "7", "--out", p("data"), "--train-count", "40", "--test-count", "30"}).code, 0);
  }

  fs::path dir;
};

TEST(CliHash, Fnv1a) {
  EXPECT_EQ(ptsc::cli::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(ptsc::cli::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST_F(Cli, RfReportPrintsBlockFields) {
  const auto r = run({"rf-report", "--config", (fs::path(PTSC_SOURCE_DIR) / "configs" / "basecnn.json").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("block RFs: [8, 22, 62, 142, 334, 974]"), std::string::npos);
  const auto j = run({"rf-report", "--config", "resnet", "--json"});
  EXPECT_EQ(json::parse(j.out)["final_rf"], 43);
}

TEST_F(Cli, RfReportWithOutWritesManifest) {
  EXPECT_EQ(run({"rf-report", "--config", "amscnn", "--out", p("rf")}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "rf" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "rf" / "rf_report.json"));
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  const auto r = run({"rf-report", "--config", "basecnn", "--colour"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"rf-report", "--config", "no-such-preset"}).code, 1);
}

TEST_F(Cli, GenDataIsReproducibleAndRefusesOverwrite) {
  make_data();
  ASSERT_EQ(run({"gen-data", "--seed", "7", "--out", p("again"), "--train-count", "40", "--test-count", "30"}).code, 0);
  EXPECT_EQ(slurp(dir / "data" / "train.ptsc"), slurp(dir / "again" / "train.ptsc"));
  EXPECT_EQ(slurp(dir / "data" / "test.ptsc"), slurp(dir / "again" / "test.ptsc"));
  EXPECT_NE(slurp(dir / "data" / "train.ptsc"), slurp(dir / "data" / "test.ptsc"));
  const auto before = slurp(dir / "data" / "train.ptsc");
  EXPECT_EQ(run({"gen-data", "--seed", "8", "--out", p("data"), "--train-count", "40"}).code, 1);
  EXPECT_EQ(slurp(dir / "data" / "train.ptsc"), before);
  EXPECT_EQ(run({"gen-data", "--seed", "8", "--out", p("data"), "--train-count", "40", "--force"}).code, 0);
  EXPECT_NE(slurp(dir / "data" / "train.ptsc"), before);
  const auto m = json::parse(slurp(dir / "data" / "manifest.json"));
  EXPECT_EQ(m["seed"], 8);
  EXPECT_EQ(m["config_hash"], "fnv1a64:" + ptsc::cli::fnv1a_hex(slurp(dir / "data" / "config.json")));
}

TEST_F(Cli, TrainEvalDumpPipeline) {
  make_data();
  const auto cfg = small_config();
  auto t = run({"train", "--config", cfg, "--data", p("data/train.ptsc"), "--out", p("run"), "--epochs", "2", "--seed", "3"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (auto f : {"config.json", "manifest.json", "best.ckpt", "last.ckpt", "history.csv"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;

  auto e = run({"eval", "--run", p("run"), "--checkpoint", "best", "--data", p("data/test.ptsc"), "--protocol", "both",
                "--out", p("run/eval"), "--dump-te-correlation"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = json::parse(slurp(dir / "run" / "eval" / "report.json"));
  EXPECT_EQ(report["model"], "small");
  EXPECT_TRUE(fs::exists(dir / "run" / "eval" / "te_correlation.csv"));

  auto d = run({"dump-te", "--run", p("run"), "--checkpoint", "last", "--out", p("te")});
  ASSERT_EQ(d.code, 0) << d.err;
  std::ifstream table(dir / "te" / "te_table.csv");
  std::string header;
  std::getline(table, header);
  EXPECT_EQ(header, "timestamp,e0,e1");

  // Re-running from the recorded config and seed reproduces the checkpoints.
  ASSERT_EQ(run({"train", "--config", p("run/config.json"), "--data", p("data/train.ptsc"), "--out", p("rerun")}).code, 0);
  EXPECT_EQ(slurp(dir / "run" / "best.ckpt"), slurp(dir / "rerun" / "best.ckpt"));
  EXPECT_EQ(slurp(dir / "run" / "last.ckpt"), slurp(dir / "rerun" / "last.ckpt"));
  EXPECT_EQ(slurp(dir / "run" / "history.csv"), slurp(dir / "rerun" / "history.csv"));

  EXPECT_EQ(run({"train", "--config", cfg, "--data", p("data/train.ptsc"), "--out", p("run"), "--epochs", "1"}).code, 1);
}

TEST_F(Cli, SinglePrecisionPipeline) {
  make_data();
  const auto cfg = small_config();
  ASSERT_EQ(run({"train", "--precision", "f32", "--config", cfg, "--data", p("data/train.ptsc"), "--out", p("run"),
                 "--epochs", "1"})
                .code,
            0);
  EXPECT_EQ(json::parse(slurp(dir / "run" / "manifest.json"))["precision"], "f32");
  EXPECT_EQ(run({"eval", "--precision", "f32", "--run", p("run"), "--data", p("data/test.ptsc"), "--out", p("ev"),
                 "--protocol", "complete"})
                .code,
            0);
}

TEST_F(Cli, ValidationErrors) {
  make_data();
  EXPECT_EQ(run({"train", "--config", "amscnn", "--data", p("missing.ptsc"), "--out", p("r")}).code, 1);
  std::ofstream(dir / "broken.ptsc") << "PTSC v1 D=1 N=2 TMIN=1 TMAX=5\nx,0,1,2,1.0\n";
  EXPECT_EQ(run({"train", "--config", "amscnn", "--data", p("broken.ptsc"), "--out", p("r")}).code, 1);
  EXPECT_EQ(run({"eval", "--checkpoint", "best", "--data", p("data/test.ptsc"), "--out", p("e")}).code, 1);
  EXPECT_EQ(run({"eval", "--protocol", "thirds", "--run", p("x"), "--data", p("data/test.ptsc"), "--out", p("e")}).code, 1);
  // Dataset channels disagree with a fully specified config.
  json c = json::parse(slurp(fs::path(small_config())));
  c["input_channels"] = 3;
  std::ofstream(dir / "three.json") << c.dump();
  EXPECT_EQ(run({"train", "--config", p("three.json"), "--data", p("data/train.ptsc"), "--out", p("r3")}).code, 1);
}

TEST_F(Cli, ProcessExitCodes) {
  const std::string exe = PTSC_CLI_PATH;
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " rf-report --config basecnn > /dev/null").c_str())), 0);
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " rf-report --config basecnn --nope > /dev/null 2>&1").c_str())), 1);
}

}  // namespace
