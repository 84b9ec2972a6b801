#include "vshuffle/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "vshuffle/bench.hpp"
#include "vshuffle/checkpoint.hpp"
#include "vshuffle/cost.hpp"
#include "vshuffle/gradcheck.hpp"
#include "vshuffle/tensor_io.hpp"
#include "vshuffle/training.hpp"

namespace vshuffle {
namespace {

// Raised for flag values that parse but make no sense.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct NetFlags {
  std::string preset;
  std::string config;
  std::optional<std::int64_t> frames, classes, input;

  void add(CLI::App* app, bool required) {
    auto* p = app->add_option("--preset", preset, "preset name, e.g. vsn-r50 or toy-vsn");
    auto* c = app->add_option("--config", config, "network config JSON file");
    p->excludes(c);
    c->excludes(p);
    if (required) {
      auto* g = app->add_option_group("network");
      g->add_option(p);
      g->add_option(c);
      g->require_option(1);
    }
    app->add_option("--frames", frames, "override frame count T");
    app->add_option("--classes", classes, "override class count");
    app->add_option("--input", input, "override input height/width");
  }

  NetworkConfig resolve() const {
    NetworkConfig cfg;
    if (!config.empty()) {
      const nlohmann::json j = read_json_file(config);
      cfg = network_config_from_json(j.contains("network") ? j.at("network") : j);
    } else {
      cfg = make_preset(preset);
    }
    if (frames) cfg.frames = *frames;
    if (classes) cfg.num_classes = *classes;
    if (input) cfg.input_size = *input;
    cfg.validate();
    return cfg;
  }
};

Shape parse_shape(const std::string& s) {
  std::vector<std::int64_t> d;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      d.push_back(std::stoll(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("bad shape '" + s + "' (expected N,T,C,H,W)");
    }
  }
  if (d.size() != 5) throw UsageError("bad shape '" + s + "' (expected N,T,C,H,W)");
  Shape shape{d[0], d[1], d[2], d[3], d[4]};
  if (!shape.valid()) throw UsageError("shape dimensions must be >= 1: " + s);
  return shape;
}

// ---------------------------------------------------------------- shuffle

struct ShuffleCmd {
  std::string in, out;
  bool inverse = false;
  std::int64_t groups = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("shuffle", "video shuffle a VST1 tensor file");
    app->add_option("--in", in, "input VST1 tensor (N,T,C,H,W)")->required();
    app->add_option("--out", out, "output VST1 tensor")->required();
    app->add_flag("--inverse", inverse, "apply the inverse shuffle");
    app->add_option("--groups", groups, "channel groups (default T)")->check(CLI::NonNegativeNumber);
  }

  int run(std::ostream& o) const {
    const AnyTensor x = load_vst(in);
    std::visit(
        [&](const auto& t) {
          const ShuffleSpec spec = ShuffleSpec::for_shape(t.shape(), groups);
          auto y = inverse ? inverse_video_shuffle(t, spec) : video_shuffle(t, spec);
          save_vst(out, y);
          o << fmt::format("{} {} -> {} (T={}, groups={})\n", inverse ? "unshuffled" : "shuffled",
                           t.shape().str(), out, spec.t_frames, spec.groups);
        },
        x);
    return kExitOk;
  }
};

// ------------------------------------------------------------------ count

struct CountCmd {
  NetFlags net;
  std::int64_t batch = 1;
  bool json = false;
  bool summary = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("count", "parameter and FLOP accounting");
    net.add(app, true);
    app->add_option("--batch", batch, "clips per forward pass")->check(CLI::PositiveNumber);
    app->add_flag("--json", json, "print the report as JSON");
    app->add_flag("--summary", summary, "totals only, no per-layer rows");
  }

  int run(std::ostream& o) const {
    const NetworkConfig cfg = net.resolve();
    const CostReport r = count_flops(
        cfg, Shape{batch, cfg.frames, cfg.in_channels, cfg.input_size, cfg.input_size});
    if (json) {
      o << r.to_json().dump(2) << '\n';
    } else {
      o << r.table(!summary);
    }
    return kExitOk;
  }
};

// ------------------------------------------------------------------ train

struct TrainCmd {
  std::string config, task, out, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> epochs;
  bool freeze_bn = false;
  int threads = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "train on a synthetic temporal task");
    app->add_option("--config", config, "run config JSON {network, train, task}")->required();
    app->add_option("--task", task, "frame_order | motion_direction (overrides config)");
    app->add_option("--seed", seed, "seed for data, init and sampling (overrides config)");
    app->add_option("--out", out, "metrics JSON-lines file")->required();
    app->add_option("--epochs", epochs, "override epoch count")->check(CLI::PositiveNumber);
    app->add_option("--checkpoint", checkpoint, "write final weights (VSNCKPT1)");
    app->add_flag("--freeze-bn", freeze_bn, "freeze all batchnorm layers but the first");
    app->add_option("--threads", threads, "BLAS threads (default VSHUFFLE_THREADS or 1)");
  }

  int run(std::ostream& o) const {
    const nlohmann::json j = read_json_file(config);
    NetworkConfig net = network_config_from_json(j.value("network", nlohmann::json::object()));
    SyntheticTask t = task_from_json(j.value("task", nlohmann::json::object()));
    TrainConfig tc = train_config_from_json(j.value("train", nlohmann::json::object()));
    if (!task.empty()) t.kind = parse_task_kind(task);
    if (seed) {
      t.seed = *seed;
      tc.seed = *seed;
    }
    if (epochs) tc.epochs = *epochs;
    if (freeze_bn) net.freeze_bn = true;
    // Training is single-threaded unless asked otherwise.
    apply_threads(threads > 0 ? threads : 1);

    const TrainResult r = train(net, t, tc);
    write_file_atomic(out, [&](std::ostream& os) {
      for (const auto& m : r.history) os << m.to_json().dump() << '\n';
    });
    for (const auto& m : r.history) {
      o << fmt::format("epoch {:3d}  lr {:.5f}  loss {:.4f}  train {:.3f}  val {:.3f}\n",
                       m.epoch, m.lr, m.loss, m.train_accuracy, m.val_accuracy);
    }
    if (!checkpoint.empty()) save_checkpoint(checkpoint, *r.network);
    return kExitOk;
  }
};

// ------------------------------------------------------------------ bench

struct BenchCmd {
  NetFlags net;
  std::string baseline, op, shape, out;
  BenchOptions opts;
  bool json = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("bench", "forward latency or op data-movement benchmark");
    net.add(app, false);
    app->add_option("--batch", opts.batch, "clips per batch")->check(CLI::PositiveNumber);
    app->add_option("--iters", opts.iterations, "measured iterations")->check(CLI::PositiveNumber);
    app->add_option("--warmup", opts.warmup, "untimed iterations first")->check(CLI::NonNegativeNumber);
    app->add_option("--threads", opts.threads, "compute threads (default VSHUFFLE_THREADS or cores)");
    app->add_option("--seed", opts.seed, "input seed");
    app->add_option("--baseline", baseline, "second preset, measured interleaved");
    app->add_option("--op", op, "shuffle | inverse | shift | copy");
    app->add_option("--shape", shape, "op tensor shape N,T,C,H,W");
    app->add_option("--out", out, "also write the CSV here");
    app->add_flag("--json", json, "JSON lines instead of CSV");
  }

  int run(std::ostream& o, std::ostream& e) const {
    std::vector<BenchRecord> records;
    if (!op.empty()) {
      if (shape.empty()) throw UsageError("--op needs --shape");
      if (!net.preset.empty() || !net.config.empty()) {
        throw UsageError("--op cannot be combined with --preset/--config");
      }
      records.push_back(bench_op(parse_bench_op(op), parse_shape(shape), opts));
    } else {
      if (net.preset.empty() && net.config.empty()) {
        throw UsageError("bench needs --preset/--config or --op");
      }
      const NetworkConfig cfg = net.resolve();
      if (baseline.empty()) {
        records.push_back(bench_forward(cfg, opts));
      } else {
        NetworkConfig base = make_preset(baseline);
        if (net.frames) base.frames = *net.frames;
        if (net.classes) base.num_classes = *net.classes;
        if (net.input) base.input_size = *net.input;
        auto [a, b] = bench_forward_pair(cfg, base, opts);
        records.push_back(a);
        records.push_back(b);
      }
    }
    for (const auto& r : records) {
      if (!r.ok()) {
        e << "bench: " << r.name << ": " << r.error << '\n';
        return kExitRuntime;
      }
    }
    std::string text;
    if (json) {
      for (const auto& r : records) text += r.to_json().dump() + '\n';
    } else {
      text = BenchRecord::csv_header() + '\n';
      for (const auto& r : records) text += r.csv_row() + '\n';
    }
    o << text;
    if (records.size() == 2) {
      o << fmt::format("# latency ratio {}/{} = {:.4f}  (threads {})\n", records[0].name,
                       records[1].name, records[0].mean_ms / records[1].mean_ms,
                       records[0].threads);
    } else {
      o << fmt::format("# threads {}", records[0].threads);
      if (records[0].bytes > 0) {
        o << fmt::format("  bytes {}  {:.3f} GB/s", records[0].bytes,
                         records[0].bytes_per_second() * 1e-9);
      }
      o << '\n';
    }
    if (!out.empty()) write_file_atomic(out, [&](std::ostream& os) { os << text; });
    return kExitOk;
  }
};

// -------------------------------------------------------------- gradcheck

struct GradCheckCmd {
  std::vector<std::string> presets{"tiny-vsn", "tiny-headtail-vsn"};
  std::optional<double> tolerance;
  std::optional<std::int64_t> samples;
  std::uint64_t seed = 0;
  bool layers = true;
  bool probe = true;
  bool json = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gradcheck", "finite-difference gradient checks (float64)");
    app->add_option("--preset", presets, "network presets to check (repeatable)");
    app->add_option("--tol", tolerance, "max relative error for layer and network checks")
        ->check(CLI::PositiveNumber);
    app->add_option("--samples", samples, "entries sampled per tensor")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "seed for inputs and parameters");
    app->add_flag("!--no-layers", layers, "skip the per-layer suite");
    app->add_flag("!--no-probe", probe, "skip the shuffle + linear probe");
    app->add_flag("--json", json, "print JSON");
  }

  GradCheckOptions tuned(GradCheckOptions o, bool exact) const {
    if (tolerance && !exact) o.tolerance = *tolerance;
    if (samples) o.samples_per_tensor = *samples;
    o.seed = seed;
    return o;
  }

  int run(std::ostream& o) const {
    std::vector<std::pair<std::string, GradCheckReport>> reports;
    if (layers) reports.emplace_back("layers", grad_check_layers(tuned(GradCheckOptions::layers(), false)));
    for (const auto& p : presets) {
      reports.emplace_back(p, grad_check(make_preset(p), tuned(GradCheckOptions::network(), false)));
    }
    if (probe) {
      reports.emplace_back("shuffle_probe",
                           grad_check_shuffle_probe(tuned(GradCheckOptions::probe(), true)));
    }
    bool pass = true;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, r] : reports) {
      pass = pass && r.pass();
      if (json) {
        j[name] = r.to_json();
      } else {
        o << "== " << name << '\n' << r.table();
      }
    }
    if (json) {
      j["pass"] = pass;
      o << j.dump(2) << '\n';
    } else {
      o << (pass ? "gradcheck PASS\n" : "gradcheck FAIL\n");
    }
    return pass ? kExitOk : kExitRuntime;
  }
};

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"video shuffle networks: tensors, cost accounting, training, benchmarks",
               "vshuffle"};
  app.require_subcommand(1);
  ShuffleCmd shuffle;
  CountCmd count;
  TrainCmd train_cmd;
  BenchCmd bench;
  GradCheckCmd gradcheck;
  shuffle.add(app);
  count.add(app);
  train_cmd.add(app);
  bench.add(app);
  gradcheck.add(app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "shuffle") return shuffle.run(out);
    if (name == "count") return count.run(out);
    if (name == "train") return train_cmd.run(out);
    if (name == "bench") return bench.run(out, err);
    if (name == "gradcheck") return gradcheck.run(out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommand(name)->help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vshuffle
