#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "vshuffle/bench.hpp"

namespace vshuffle {
namespace {

BenchOptions quick(std::int64_t iters, std::int64_t warmup = 1, std::int64_t batch = 1) {
  BenchOptions o;
  o.batch = batch;
  o.iterations = iters;
  o.warmup = warmup;
  o.threads = 1;
  return o;
}

TEST(Bench, SingleIterationHasZeroSpread) {
  const BenchRecord r = bench_forward(make_preset("tiny-vsn"), quick(1, 0, 2));
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.std_ms, 0.0);
  EXPECT_GT(r.mean_ms, 0.0);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.threads, 1);
}

TEST(Bench, ThroughputIsBatchOverLatency) {
  const BenchRecord r = bench_forward(make_preset("tiny-vsn"), quick(5, 1, 4));
  ASSERT_TRUE(r.ok());
  EXPECT_DOUBLE_EQ(r.vps, 4.0 / (r.mean_ms * 1e-3));
  EXPECT_GE(r.std_ms, 0.0);
}

TEST(Bench, CsvAndJson) {
  BenchRecord r;
  r.name = "toy-vsn";
  r.batch = 16;
  r.iterations = 500;
  r.mean_ms = 12.5;
  r.std_ms = 0.25;
  r.vps = 1280.0;
  EXPECT_EQ(BenchRecord::csv_header(), "name,batch,iters,mean_ms,std_ms,vps");
  std::vector<std::string> cells;
  std::stringstream row(r.csv_row());
  for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0], "toy-vsn");
  EXPECT_EQ(cells[1], "16");
  EXPECT_EQ(cells[2], "500");
  EXPECT_DOUBLE_EQ(std::stod(cells[3]), 12.5);
  EXPECT_DOUBLE_EQ(std::stod(cells[5]), 1280.0);
  EXPECT_EQ(r.to_json().at("vps"), 1280.0);
}

TEST(Bench, OptionValidation) {
  EXPECT_THROW(bench_forward(make_preset("tiny-vsn"), quick(0)), ConfigError);
  EXPECT_THROW(bench_forward(make_preset("tiny-vsn"), quick(1, -1)), ConfigError);
  EXPECT_THROW(bench_op(BenchOp::kShuffle, Shape{1, 3, 4, 2, 2}, quick(1)), ConfigError);
  EXPECT_THROW(parse_bench_op("transpose"), ConfigError);
  EXPECT_EQ(parse_bench_op("inverse"), BenchOp::kInverse);
}

TEST(Bench, ThreadsFromEnvironment) {
  ::setenv("VSHUFFLE_THREADS", "1", 1);
  EXPECT_EQ(apply_threads(0), 1);
  ::setenv("VSHUFFLE_THREADS", "many", 1);
  EXPECT_THROW(apply_threads(0), ConfigError);
  ::setenv("VSHUFFLE_THREADS", "1", 1);
  EXPECT_EQ(apply_threads(1), 1);
}

const Shape kLarge{16, 8, 64, 56, 56};

TEST(BenchOp, BytesAreReadPlusWrite) {
  const BenchRecord r = bench_op(BenchOp::kShuffle, kLarge, quick(1, 0));
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.bytes, static_cast<std::int64_t>(2 * kLarge.numel() * sizeof(float)));
  EXPECT_EQ(r.batch, 16);
  EXPECT_DOUBLE_EQ(r.bytes_per_second(), r.bytes / (r.mean_ms * 1e-3));
}

TEST(BenchOp, ShuffleWithinThreeTimesCopy) {
  const BenchRecord copy = bench_op(BenchOp::kCopy, kLarge, quick(5));
  const BenchRecord shuffle = bench_op(BenchOp::kShuffle, kLarge, quick(5));
  const BenchRecord inverse = bench_op(BenchOp::kInverse, kLarge, quick(5));
  ASSERT_TRUE(copy.ok() && shuffle.ok() && inverse.ok());
  EXPECT_LE(shuffle.mean_ms, 3.0 * copy.mean_ms);
  EXPECT_LE(inverse.mean_ms, 3.0 * copy.mean_ms);
}

TEST(BenchOp, ZeroShiftCostsAboutACopy) {
  const BenchRecord copy = bench_op(BenchOp::kCopy, kLarge, quick(5));
  const BenchRecord shift = bench_op(BenchOp::kShift, kLarge, quick(5), ShiftSpec{0.0, 0.0});
  ASSERT_TRUE(copy.ok() && shift.ok());
  EXPECT_LE(shift.mean_ms, 3.0 * copy.mean_ms);
  EXPECT_GE(shift.mean_ms, copy.mean_ms / 3.0);
}

TEST(Bench, DoublingBatchDoesNotReduceLatency) {
  const NetworkConfig cfg = make_preset("toy-vsn");
  const BenchRecord one = bench_forward(cfg, quick(10, 2, 1));
  const BenchRecord two = bench_forward(cfg, quick(10, 2, 2));
  ASSERT_TRUE(one.ok() && two.ok());
  EXPECT_GE(two.mean_ms, 0.9 * one.mean_ms);
}

TEST(Bench, PairAlternatesAndNamesBoth) {
  const auto [a, b] = bench_forward_pair(make_preset("tiny-vsn"), make_preset("tiny-tsn"), quick(4, 1, 2));
  EXPECT_EQ(a.name, "tiny-vsn");
  EXPECT_EQ(b.name, "tiny-tsn");
  EXPECT_EQ(a.iterations, 4);
  EXPECT_EQ(b.iterations, 4);
  EXPECT_GT(a.mean_ms, 0.0);
  EXPECT_GT(b.mean_ms, 0.0);
}

TEST(Bench, OutOfMemoryIsReported) {
  // 2^46 floats is beyond any user address space.
  const BenchRecord op = bench_op(BenchOp::kCopy, Shape{1 << 20, 8, 1024, 128, 64}, quick(1, 0));
  EXPECT_FALSE(op.ok());
  EXPECT_NE(op.error.find("out of memory"), std::string::npos);

  const BenchRecord fwd = bench_forward(make_preset("toy-vsn"), quick(1, 0, std::int64_t{1} << 34));
  EXPECT_FALSE(fwd.ok());
  EXPECT_NE(fwd.to_json().dump().find("out of memory"), std::string::npos);
}

}  // namespace
}  // namespace vshuffle
