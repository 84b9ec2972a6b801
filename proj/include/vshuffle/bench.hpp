#ifndef VSHUFFLE_BENCH_HPP
#define VSHUFFLE_BENCH_HPP

// Forward-latency and data-movement benchmarks. Timing uses a monotonic
// clock per iteration; input generation is outside the measured region.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"

#include "vshuffle/network_config.hpp"
#include "vshuffle/temporal_ops.hpp"
#include "vshuffle/tensor.hpp"

namespace vshuffle {

struct BenchOptions {
  std::int64_t batch = 16;
  std::int64_t iterations = 500;  // measured, after `warmup` untimed ones
  std::int64_t warmup = 50;
  int threads = 0;  // <= 0: VSHUFFLE_THREADS, else the host core count
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRecord {
  std::string name;
  std::int64_t batch = 0;
  std::int64_t iterations = 0;
  std::int64_t warmup = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;  // population std over measured iterations
  double vps = 0.0;     // batch / mean latency in seconds
  int threads = 0;
  std::int64_t bytes = 0;  // bytes moved per iteration (op benchmarks)
  std::string error;       // set instead of throwing on allocation failure

  bool ok() const { return error.empty(); }
  double bytes_per_second() const { return mean_ms > 0 ? bytes / (mean_ms * 1e-3) : 0.0; }

  static std::string csv_header();  // name,batch,iters,mean_ms,std_ms,vps
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

// Resolves the thread count (flag, then VSHUFFLE_THREADS, then host cores)
// and applies it to the BLAS backend. Returns the count in effect.
int apply_threads(int requested);

// Eval-mode forward passes (BN running statistics, dropout off) on a fixed
// random batch.
BenchRecord bench_forward(const NetworkConfig& cfg, const BenchOptions& opts = {});

// Two configurations measured in alternating ABBA order so slow drift of the
// host affects both equally.
std::pair<BenchRecord, BenchRecord> bench_forward_pair(const NetworkConfig& a,
                                                       const NetworkConfig& b,
                                                       const BenchOptions& opts = {});

enum class BenchOp { kShuffle, kInverse, kShift, kCopy };
BenchOp parse_bench_op(std::string_view s);
std::string_view to_string(BenchOp op);

// One op over a float tensor of `shape`; bytes = read + write of the tensor.
// Shuffle ops use groups == T.
BenchRecord bench_op(BenchOp op, const Shape& shape, const BenchOptions& opts = {},
                     const ShiftSpec& shift = {});

}  // namespace vshuffle

#endif  // VSHUFFLE_BENCH_HPP
