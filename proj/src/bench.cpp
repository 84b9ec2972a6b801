#include "vshuffle/bench.hpp"

#include <cblas.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <new>
#include <random>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "vshuffle/network.hpp"

namespace vshuffle {

void BenchOptions::validate() const {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
}

std::string BenchRecord::csv_header() { return "name,batch,iters,mean_ms,std_ms,vps"; }

std::string BenchRecord::csv_row() const {
  return fmt::format("{},{},{},{:.6f},{:.6f},{:.6f}", name, batch, iterations, mean_ms, std_ms,
                     vps);
}

nlohmann::json BenchRecord::to_json() const {
  nlohmann::json j{{"name", name},       {"batch", batch},     {"iters", iterations},
                   {"warmup", warmup},   {"mean_ms", mean_ms}, {"std_ms", std_ms},
                   {"vps", vps},         {"threads", threads}};
  if (bytes > 0) {
    j["bytes"] = bytes;
    j["bytes_per_s"] = bytes_per_second();
  }
  if (!ok()) j["error"] = error;
  return j;
}

int apply_threads(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("VSHUFFLE_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v < 1) {
        throw ConfigError(fmt::format("VSHUFFLE_THREADS='{}' is not a positive integer", env));
      }
      n = static_cast<int>(v);
    }
  }
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  openblas_set_num_threads(n);
  return n;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Timer {
  std::vector<double> samples_ms;

  template <typename Fn>
  void run(Fn&& fn) {
    const auto t0 = Clock::now();
    fn();
    samples_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
};

BenchRecord summarize(std::string name, const BenchOptions& o, int threads,
                      const std::vector<double>& ms) {
  BenchRecord r;
  r.name = std::move(name);
  r.batch = o.batch;
  r.iterations = o.iterations;
  r.warmup = o.warmup;
  r.threads = threads;
  double sum = 0.0;
  for (double v : ms) sum += v;
  r.mean_ms = sum / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - r.mean_ms) * (v - r.mean_ms);
  r.std_ms = std::sqrt(var / static_cast<double>(ms.size()));
  r.vps = static_cast<double>(r.batch) / (r.mean_ms * 1e-3);
  return r;
}

BenchRecord failed(std::string name, const BenchOptions& o, std::string why) {
  BenchRecord r;
  r.name = std::move(name);
  r.batch = o.batch;
  r.iterations = o.iterations;
  r.warmup = o.warmup;
  r.error = std::move(why);
  return r;
}

Tensor32 random_input(const NetworkConfig& cfg, const BenchOptions& o) {
  Tensor32 x(Shape{o.batch, cfg.frames, cfg.in_channels, cfg.input_size, cfg.input_size});
  std::mt19937_64 rng(o.seed);
  fill_normal(x, rng);
  return x;
}

}  // namespace

BenchRecord bench_forward(const NetworkConfig& cfg, const BenchOptions& o) {
  o.validate();
  const int threads = apply_threads(o.threads);
  try {
    Network<float> net(cfg, o.seed);
    const Tensor32 x = random_input(cfg, o);
    Timer t;
    for (std::int64_t i = 0; i < o.warmup + o.iterations; ++i) {
      if (i < o.warmup) {
        net.forward(x, Mode::kEval);
      } else {
        t.run([&] { net.forward(x, Mode::kEval); });
      }
    }
    return summarize(cfg.name, o, threads, t.samples_ms);
  } catch (const std::bad_alloc&) {
    return failed(cfg.name, o, fmt::format("out of memory at batch {}", o.batch));
  }
}

std::pair<BenchRecord, BenchRecord> bench_forward_pair(const NetworkConfig& a,
                                                       const NetworkConfig& b,
                                                       const BenchOptions& o) {
  o.validate();
  const int threads = apply_threads(o.threads);
  try {
    Network<float> na(a, o.seed);
    Network<float> nb(b, o.seed);
    const Tensor32 xa = random_input(a, o);
    const Tensor32 xb = random_input(b, o);
    Timer ta, tb;
    for (std::int64_t i = 0; i < o.warmup + o.iterations; ++i) {
      auto run_a = [&] { na.forward(xa, Mode::kEval); };
      auto run_b = [&] { nb.forward(xb, Mode::kEval); };
      if (i < o.warmup) {
        run_a();
        run_b();
      } else if (i % 2 == 0) {
        ta.run(run_a);
        tb.run(run_b);
      } else {
        tb.run(run_b);
        ta.run(run_a);
      }
    }
    return {summarize(a.name, o, threads, ta.samples_ms),
            summarize(b.name, o, threads, tb.samples_ms)};
  } catch (const std::bad_alloc&) {
    const std::string why = fmt::format("out of memory at batch {}", o.batch);
    return {failed(a.name, o, why), failed(b.name, o, why)};
  }
}

BenchOp parse_bench_op(std::string_view s) {
  if (s == "shuffle") return BenchOp::kShuffle;
  if (s == "inverse") return BenchOp::kInverse;
  if (s == "shift") return BenchOp::kShift;
  if (s == "copy") return BenchOp::kCopy;
  throw ConfigError("unknown op '" + std::string(s) + "' (shuffle|inverse|shift|copy)");
}

std::string_view to_string(BenchOp op) {
  switch (op) {
    case BenchOp::kShuffle: return "shuffle";
    case BenchOp::kInverse: return "inverse";
    case BenchOp::kShift: return "shift";
    case BenchOp::kCopy: return "copy";
  }
  return "?";
}

BenchRecord bench_op(BenchOp op, const Shape& shape, const BenchOptions& o,
                     const ShiftSpec& shift) {
  o.validate();
  check_shape(shape);
  const ShuffleSpec spec = ShuffleSpec::for_shape(shape);
  shift.validate();
  const int threads = apply_threads(o.threads);
  const std::string name = fmt::format("{}{}", to_string(op), shape.str());
  try {
    Tensor32 x(shape);
    std::mt19937_64 rng(o.seed);
    fill_uniform(x, rng);
    Tensor32 sink;
    auto body = [&] {
      switch (op) {
        case BenchOp::kShuffle: sink = video_shuffle(x, spec); break;
        case BenchOp::kInverse: sink = inverse_video_shuffle(x, spec); break;
        case BenchOp::kShift: sink = temporal_shift(x, shift); break;
        case BenchOp::kCopy: sink = Tensor32(x); break;
      }
    };
    Timer t;
    for (std::int64_t i = 0; i < o.warmup + o.iterations; ++i) {
      if (i < o.warmup) {
        body();
      } else {
        t.run(body);
      }
    }
    BenchRecord r = summarize(name, o, threads, t.samples_ms);
    r.batch = shape.n;
    r.vps = static_cast<double>(r.batch) / (r.mean_ms * 1e-3);
    r.bytes = 2 * static_cast<std::int64_t>(shape.numel() * sizeof(float));
    return r;
  } catch (const std::bad_alloc&) {
    return failed(name, o, "out of memory for " + shape.str());
  }
}

}  // namespace vshuffle
