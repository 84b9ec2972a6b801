#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"

#include "vshuffle/cli.hpp"
#include "vshuffle/temporal_ops.hpp"
#include "vshuffle/tensor_io.hpp"

namespace vshuffle {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("vshuffle_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::vector<fs::path> files() const {
    std::vector<fs::path> v;
    for (const auto& e : fs::directory_iterator(dir_)) v.push_back(e.path().filename());
    return v;
  }
  fs::path dir_;
};

TEST_F(CliTest, CountReportsTotals) {
  const CliRun r = run({"count", "--preset", "vsn-r50", "--frames", "8", "--classes", "174", "--input", "224"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto pos = r.out.find("total  params");
  ASSERT_NE(pos, std::string::npos);
  const std::string totals = r.out.substr(pos);
  EXPECT_NE(totals.find("23.86M"), std::string::npos) << totals;
  EXPECT_NE(totals.find("32.70G"), std::string::npos) << totals;
  EXPECT_NE(r.out.find("res5.2.shuffle"), std::string::npos);
}

TEST_F(CliTest, CountJsonIsStableAndZeroCost) {
  const CliRun a = run({"count", "--preset", "vsn-r101", "--json"});
  const CliRun b = run({"count", "--preset", "vsn-r101", "--json"});
  ASSERT_EQ(a.code, kExitOk);
  EXPECT_EQ(a.out, b.out);
  const auto ja = nlohmann::json::parse(a.out);
  for (const char* other : {"tsn-r101", "shift-r101"}) {
    const auto j = nlohmann::json::parse(run({"count", "--preset", other, "--json"}).out);
    EXPECT_EQ(j["total_params"], ja["total_params"]);
    EXPECT_EQ(j["flops"], ja["flops"]);
  }
}

TEST_F(CliTest, CountFromConfigFile) {
  std::ofstream(path("net.json")) << R"({"network": {"preset": "toy-vsn", "classes": 2}})";
  const CliRun r = run({"count", "--config", path("net.json"), "--summary"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("total"), std::string::npos);
  EXPECT_EQ(r.out.find("res2.0.conv1"), std::string::npos);
}

TEST_F(CliTest, ShuffleRoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  Tensor32 x(Shape{2, 8, 16, 3, 3});
  fill_normal(x, rng);
  save_vst(path("a.vst"), x);
  ASSERT_EQ(run({"shuffle", "--in", path("a.vst"), "--out", path("b.vst")}).code, kExitOk);
  ASSERT_EQ(run({"shuffle", "--in", path("b.vst"), "--out", path("c.vst"), "--inverse"}).code, kExitOk);
  EXPECT_EQ(slurp(path("a.vst")), slurp(path("c.vst")));
  EXPECT_NE(slurp(path("a.vst")), slurp(path("b.vst")));
  const AnyTensor b = load_vst(path("b.vst"));
  EXPECT_TRUE(identical(std::get<Tensor32>(b), video_shuffle(x, ShuffleSpec::for_shape(x.shape()))));
}

TEST_F(CliTest, ShuffleKeepsDoublePrecision) {
  Tensor64 x(Shape{1, 2, 2, 1, 1}, {1, 2, 3, 4});
  save_vst(path("a.vst"), x);
  ASSERT_EQ(run({"shuffle", "--in", path("a.vst"), "--out", path("b.vst"), "--groups", "2"}).code, kExitOk);
  const Tensor64 y = std::get<Tensor64>(load_vst(path("b.vst")));
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{1, 3, 2, 4}));
}

TEST_F(CliTest, BenchWritesOneCsvRecord) {
  const CliRun r = run({"bench", "--preset", "tiny-vsn", "--batch", "2", "--iters", "3", "--warmup", "1",
                     "--threads", "1", "--out", path("b.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream csv(slurp(path("b.csv")));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "name,batch,iters,mean_ms,std_ms,vps");
  EXPECT_EQ(lines[1].rfind("tiny-vsn,2,3,", 0), 0u) << lines[1];
  EXPECT_NE(r.out.find("# threads 1"), std::string::npos);
}

TEST_F(CliTest, BenchOpAndPair) {
  const CliRun op = run({"bench", "--op", "shuffle", "--shape", "2,4,8,4,4", "--iters", "2", "--warmup", "0",
                      "--threads", "1", "--json"});
  ASSERT_EQ(op.code, kExitOk) << op.err;
  const auto j = nlohmann::json::parse(op.out.substr(0, op.out.find('\n')));
  EXPECT_EQ(j["bytes"], 2 * 2 * 4 * 8 * 4 * 4 * 4);

  const CliRun pair = run({"bench", "--preset", "tiny-vsn", "--baseline", "tiny-tsn", "--batch", "1", "--iters",
                        "2", "--warmup", "0", "--threads", "1"});
  ASSERT_EQ(pair.code, kExitOk) << pair.err;
  EXPECT_NE(pair.out.find("# latency ratio tiny-vsn/tiny-tsn"), std::string::npos);
}

TEST_F(CliTest, TrainWritesDeterministicMetrics) {
  std::ofstream(path("run.json")) << R"({
    "network": {"preset": "toy-vsn"},
    "task": {"kind": "frame_order", "num_train": 32, "num_val": 16, "seed": 4},
    "train": {"epochs": 2, "batch_size": 8, "warmup_epochs": 0, "seed": 2}
  })";
  const CliRun a = run({"train", "--config", path("run.json"), "--out", path("a.jsonl"), "--checkpoint",
                     path("a.ckpt")});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const CliRun b = run({"train", "--config", path("run.json"), "--out", path("b.jsonl")});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_TRUE(fs::exists(path("a.ckpt")));

  std::istringstream lines(slurp(path("a.jsonl")));
  int n = 0;
  for (std::string l; std::getline(lines, l); ++n) {
    const auto j = nlohmann::json::parse(l);
    EXPECT_EQ(j["epoch"], n);
    EXPECT_TRUE(j.contains("val_acc"));
  }
  EXPECT_EQ(n, 2);

  const CliRun c = run({"train", "--config", path("run.json"), "--out", path("c.jsonl"), "--seed", "9",
                     "--epochs", "1", "--task", "motion_direction"});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  EXPECT_NE(slurp(path("c.jsonl")), slurp(path("a.jsonl")));
}

TEST_F(CliTest, GradCheckSmoke) {
  const CliRun r = run({"gradcheck", "--preset", "tiny-tsn", "--samples", "2", "--no-layers"});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_NE(r.out.find("gradcheck PASS"), std::string::npos);
  const CliRun strict = run({"gradcheck", "--no-layers", "--preset", "tiny-tsn", "--samples", "2",
                          "--tol", "1e-15", "--json"});
  EXPECT_EQ(strict.code, kExitRuntime);
  EXPECT_EQ(nlohmann::json::parse(strict.out)["pass"], false);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  const std::vector<std::vector<std::string>> cases{
      {},
      {"frobnicate"},
      {"count"},
      {"count", "--preset", "vsn-r50", "--config", "x.json"},
      {"count", "--preset", "vsn-r50", "--bogus"},
      {"count", "--preset", "vsn-r34"},
      {"count", "--preset", "vsn-r50", "--batch", "0"},
      {"shuffle", "--in", "a.vst"},
      {"bench", "--op", "shuffle", "--shape", "1,2,3"},
      {"bench", "--op", "twist", "--shape", "1,2,4,1,1"},
      {"bench", "--preset", "toy-vsn", "--iters", "0"},
      {"bench"},
      {"train", "--out", "x.jsonl"},
  };
  for (const auto& args : cases) {
    const CliRun r = run(args);
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    EXPECT_EQ(r.code, kExitUsage) << joined;
    EXPECT_FALSE(r.err.empty()) << joined;
  }
}

TEST_F(CliTest, HelpExitsZero) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("gradcheck"), std::string::npos);
}

TEST_F(CliTest, RuntimeFailuresExitTwoWithoutPartialFiles) {
  EXPECT_EQ(run({"shuffle", "--in", path("missing.vst"), "--out", path("o.vst")}).code, kExitRuntime);
  std::ofstream(path("bad.vst")) << "VST1\n1 2 2 1 1 f32\nxx";
  EXPECT_EQ(run({"shuffle", "--in", path("bad.vst"), "--out", path("o.vst")}).code, kExitRuntime);
  EXPECT_EQ(run({"count", "--config", path("missing.json")}).code, kExitRuntime);

  std::ofstream(path("run.json")) << R"({"network": {"preset": "toy-vsn"},
    "task": {"num_train": 4, "num_val": 4}, "train": {"epochs": 1}})";
  const CliRun t = run({"train", "--config", path("run.json"), "--out", path("nodir/m.jsonl")});
  EXPECT_EQ(t.code, kExitRuntime);

  // Only the inputs written above remain: no outputs, no temporaries.
  auto names = files();
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<fs::path>{"bad.vst", "run.json"}));
}

}  // namespace
}  // namespace vshuffle
