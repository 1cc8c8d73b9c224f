#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "harness_fixture.hpp"
#include "shield/persist.hpp"
#include "test_util.hpp"

using namespace shield;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

Result run(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(SHIELD_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = fs::exists(err) ? read_text(err) : "";
  return r;
}

}  // namespace

TEST(Cli, HelpSucceeds) {
  const auto dir = testutil::temp_dir("help");
  EXPECT_EQ(run("--help", dir).code, 0);
  EXPECT_NE(read_text(dir / "stdout.txt").find("run-full"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  const auto dir = testutil::temp_dir("usage");
  EXPECT_EQ(run("--bogus forge", dir).code, 1);
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("--threads 0 forge", dir).code, 1);
  EXPECT_EQ(run("--config /no/such/file forge", dir).code, 1);
}

TEST(Cli, DetectWithoutScoresIsAStageError) {
  const auto dir = testutil::temp_dir("detect");
  write_text(dir / "c.json", testutil::tiny_config().to_json());
  const Result r = run("--config " + (dir / "c.json").string() + " --out " + (dir / "run").string() + " detect", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("[detect]"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigIsTagged) {
  const auto dir = testutil::temp_dir("badcfg");
  write_text(dir / "c.json", "{\"run\":{\"nope\":1}}");
  const Result r = run("--config " + (dir / "c.json").string() + " --out " + (dir / "run").string() + " forge", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("[config]"), std::string::npos) << r.err;
}

TEST(Cli, RunFullTwiceAndReport) {
  const auto dir = testutil::temp_dir("full");
  write_text(dir / "c.json", testutil::tiny_config().to_json());
  const std::string cfg = "--config " + (dir / "c.json").string();
  ASSERT_EQ(run(cfg + " --seed 5 --out " + (dir / "a").string() + " run-full", dir).code, 0);
  ASSERT_EQ(run(cfg + " --seed 5 --out " + (dir / "b").string() + " run-full", dir).code, 0);
  EXPECT_EQ(read_text(dir / "a" / "report.json"), read_text(dir / "b" / "report.json"));
  // Re-running on a finished directory changes nothing.
  ASSERT_EQ(run(cfg + " --seed 5 --out " + (dir / "a").string() + " run-full", dir).code, 0);
  EXPECT_EQ(read_text(dir / "a" / "report.json"), read_text(dir / "b" / "report.json"));
  // A different seed in the same directory is refused.
  EXPECT_EQ(run(cfg + " --seed 6 --out " + (dir / "a").string() + " run-full", dir).code, 2);

  ASSERT_EQ(run("--out " + (dir / "a").string() + " report " + (dir / "b").string(), dir).code, 0);
  const auto rows = parse_csv(read_text(dir / "a" / "summary.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "rate");
  EXPECT_EQ(rows[3].back(), "mean");
}

TEST(Cli, StagesRunOneAtATime) {
  const auto dir = testutil::temp_dir("stages");
  write_text(dir / "c.json", testutil::tiny_config().to_json());
  const std::string base = "--config " + (dir / "c.json").string() + " --out " + (dir / "run").string() + " ";
  for (const char* s : {"forge", "train", "attribute", "detect", "defend", "evaluate"})
    ASSERT_EQ(run(base + s, dir).code, 0) << s << ": " << read_text(dir / "stderr.txt");
  EXPECT_TRUE(fs::exists(dir / "run" / "report.json"));
}
