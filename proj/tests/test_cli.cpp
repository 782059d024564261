#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "oracles.hpp"
#include "ross/cli.hpp"

using namespace ross;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ross");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string tiny_config(const fs::path& data) {
  return R"({"dataset": ")" + data.generic_string() + R"(",
  "schedule": {"total_classes": 4, "first": 2, "increment": 2, "tasks": 1},
  "method": {"name": "lwf"},
  "model": {"widths": [4, 8, 8, 8], "decoder_width": 4},
  "optimizer": {"epochs": 1, "decay_epochs": [], "batch_size": 16},
  "probe_count": 2
}
)";
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("cli");
    const auto r = invoke({"gen-data", "--out", (dir_->path / "data").string(), "--classes", "4", "--per-class", "20", "--size", "32", "--seed", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    write_text(dir_->path / "cfg.json", tiny_config(dir_->path / "data"));
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path root() { return dir_->path; }
  static oracle::TempDir* dir_;
};
oracle::TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"gen-data", "--classes", "4"}).code, 2);
  EXPECT_EQ(invoke({"run", "--out", "x"}).code, 2);
  EXPECT_EQ(invoke({"gen-data", "--out", "x", "--classes", "four"}).code, 2);
  const auto help = invoke({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("gen-data"), std::string::npos);
}

TEST(Cli, GenDataRefusesNonEmptyDirectory) {
  oracle::TempDir dir("cli_gen");
  write_text(dir.path / "keep.txt", "x");
  const auto r = invoke({"gen-data", "--out", dir.path.string(), "--classes", "4", "--per-class", "20", "--size", "32"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--force"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path / "keep.txt"));
  EXPECT_EQ(invoke({"gen-data", "--out", dir.path.string(), "--classes", "4", "--per-class", "20", "--size", "32", "--force"}).code, 0);
  EXPECT_FALSE(fs::exists(dir.path / "keep.txt"));
  EXPECT_TRUE(fs::exists(dir.path / "manifest.csv"));
  EXPECT_EQ(invoke({"gen-data", "--out", (dir.path / "n").string(), "--classes", "30"}).code, 1);
}

TEST_F(CliTest, SchemaViolationListsKeys) {
  write_text(root() / "bad.json", R"({"optimizer": {"epochz": 3}, "seed": "x"})");
  const auto r = invoke({"run", "--config", (root() / "bad.json").string(), "--out", (root() / "bad_run").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("optimizer.epochz"), std::string::npos);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
  EXPECT_FALSE(fs::exists(root() / "bad_run" / "metrics.csv"));
  EXPECT_EQ(invoke({"run", "--config", (root() / "cfg.json").string(), "--out", (root() / "r"), "--ross", "maybe"}).code, 2);
  EXPECT_EQ(invoke({"run", "--config", (root() / "cfg.json").string(), "--out", (root() / "r"), "--seeds", "1,x"}).code, 2);
  EXPECT_EQ(invoke({"run", "--config", (root() / "missing.json").string(), "--out", (root() / "r")}).code, 1);
}

TEST_F(CliTest, TeacherCheck) {
  EXPECT_EQ(invoke({"teacher", "check", (root() / "data").string()}).code, 0);
  oracle::TempDir copy("cli_teacher");
  fs::copy(root() / "data", copy.path / "d", fs::copy_options::recursive);
  fs::remove(copy.path / "d" / "images" / "00003.bnd.png");
  const auto r = invoke({"teacher", "check", (copy.path / "d").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("00003"), std::string::npos);
  EXPECT_NE(r.out.find("79 of 80"), std::string::npos);
}

TEST_F(CliTest, RunWritesRunDirectory) {
  const auto out = root() / "single";
  const auto before = std::distance(fs::directory_iterator(root()), fs::directory_iterator{});
  const auto r = invoke({"run", "--config", (root() / "cfg.json").string(), "--out", out.string(), "--method", "finetune", "--ross", "off"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(root()), fs::directory_iterator{}), before + 1);
  EXPECT_EQ(cli::read_text(out / "config.json"), cli::read_text(root() / "cfg.json"));
  const auto resolved = parse_config_text(cli::read_text(out / "config.resolved.json"));
  EXPECT_EQ(resolved.method.name, "finetune");
  EXPECT_FALSE(resolved.ross.enable_lm || resolved.ross.enable_dbs || resolved.ross.enable_sni);
  for (const char* f : {"metrics.csv", "losses.csv", "probe.csv", "log.txt", "outputs.json", "checkpoints/task_1.ckpt", "dumps/task0/probe1_bnd.png"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto listing = nlohmann::json::parse(cli::read_text(out / "outputs.json"));
  std::set<std::string> listed;
  for (const auto& e : listing.at("files")) {
    const std::string p = e.at("path");
    listed.insert(p);
    EXPECT_EQ(e.at("fnv1a64").get<std::string>(), hash_file(out / p)) << p;
  }
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "outputs.json")
      EXPECT_TRUE(listed.count(fs::relative(e.path(), out).generic_string())) << e.path();

  std::ifstream m(out / "metrics.csv");
  const auto table = read_metrics_csv(m);
  EXPECT_EQ(table.matrix.tasks_evaluated(), 2);
}

TEST_F(CliTest, GridRunsFourVariants) {
  const auto out = root() / "grid";
  const auto r = invoke({"run", "--config", (root() / "cfg.json").string(), "--out", out.string(), "--grid", "ross"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* v : {"baseline", "lm", "lm_dbs", "full"}) {
    EXPECT_TRUE(fs::exists(out / v / "metrics.csv")) << v;
    const auto c = parse_config_text(cli::read_text(out / v / "config.resolved.json"));
    const std::string name = v;
    EXPECT_EQ(c.ross.enable_lm, name != "baseline");
    EXPECT_EQ(c.ross.enable_dbs, name == "lm_dbs" || name == "full");
    EXPECT_EQ(c.ross.enable_sni, name == "full");
  }
  const auto grid = cli::read_text(out / "grid.csv");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 5);

  const auto rep = root() / "report";
  const auto rr = invoke({"report", "--runs", (out / "baseline").string(), (out / "full").string(), "--out", rep.string()});
  ASSERT_EQ(rr.code, 0) << rr.err;
  const auto merged = cli::read_text(rep / "results.csv");
  EXPECT_EQ(merged.substr(0, merged.find('\n')), "after_task,baseline:avg_accuracy,baseline:avg_forgetting,full:avg_accuracy,full:avg_forgetting");
  EXPECT_EQ(std::count(merged.begin(), merged.end(), '\n'), 3);
  // one polyline per run, T+1 points each
  const auto svg = cli::read_text(rep / "accuracy.svg");
  std::regex poly("points=\"([^\"]*)\"");
  int lines = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it, ++lines) {
    const std::string pts = (*it)[1];
    EXPECT_EQ(std::count(pts.begin(), pts.end(), ',') , 2);
  }
  EXPECT_EQ(lines, 2);
  EXPECT_TRUE(fs::exists(rep / "forgetting.svg"));

  // a parent directory expands to every run beneath it
  const auto all = invoke({"report", "--runs", out.string(), "--out", (root() / "report_all").string(), "--format", "csv"});
  ASSERT_EQ(all.code, 0) << all.err;
  EXPECT_FALSE(fs::exists(root() / "report_all" / "accuracy.svg"));
  std::ifstream back(root() / "report_all" / "matrices" / "grid_full.csv");
  std::ifstream orig(out / "full" / "metrics.csv");
  EXPECT_EQ(read_metrics_csv(back).matrix, read_metrics_csv(orig).matrix);
}

TEST_F(CliTest, SeedBatchAggregates) {
  const auto out = root() / "seeds";
  const auto r = invoke({"run", "--config", (root() / "cfg.json").string(), "--out", out.string(), "--seeds", "3,4", "--ross", "off"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "seed_3" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "seed_4" / "metrics.csv"));
  const auto agg = cli::read_text(out / "aggregate.csv");
  EXPECT_EQ(agg.substr(0, agg.find('\n')), "after_task,seeds,avg_accuracy_mean,avg_accuracy_std,avg_forgetting_mean,avg_forgetting_std");
  EXPECT_EQ(std::count(agg.begin(), agg.end(), '\n'), 3);
}

TEST_F(CliTest, ResumeAndNoiseDump) {
  const auto out = root() / "resume";
  const auto cfg = (root() / "cfg.json").string();
  const auto dump = out / "noise";
  ASSERT_EQ(invoke({"run", "--config", cfg, "--out", out.string(), "--dump-noise", dump.string()}).code, 0);
  const auto first = cli::read_text(out / "metrics.csv");
  int maps = 0;
  for (const auto& e : fs::directory_iterator(dump))
    if (e.path().extension() == ".png") {
      ++maps;
      auto txt = e.path();
      txt.replace_extension(".txt");
      EXPECT_NE(cli::read_text(txt).find("seed"), std::string::npos) << txt;
    }
  EXPECT_GE(maps, 3);  // at least one channel per stage
  fs::remove(out / "checkpoints" / "task_1.ckpt");
  const auto r = invoke({"run", "--config", cfg, "--out", out.string(), "--resume"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumed from task 0"), std::string::npos);
  EXPECT_EQ(cli::read_text(out / "metrics.csv"), first);
}

TEST(Cli, ReportWithoutMetricsFails) {
  oracle::TempDir dir("cli_report");
  fs::create_directories(dir.path / "empty");
  EXPECT_EQ(invoke({"report", "--runs", (dir.path / "empty").string(), "--out", (dir.path / "rep").string()}).code, 1);
  EXPECT_EQ(invoke({"report", "--runs", (dir.path / "nope").string(), "--out", (dir.path / "rep").string()}).code, 1);
}
