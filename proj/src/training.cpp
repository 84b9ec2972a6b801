#include "vshuffle/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace vshuffle {

// ------------------------------------------------------------------ loss

template <typename S>
LossResult<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels) {
  const std::int64_t n = logits.shape().n;
  const std::int64_t k = static_cast<std::int64_t>(logits.size()) / n;
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }
  LossResult<S> r;
  r.grad_logits = Tensor<S>(logits.shape());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    const S* row = logits.data() + i * k;
    double mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[y];
    S* g = r.grad_logits.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      g[j] = static_cast<S>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& logits) {
  const std::int64_t n = logits.shape().n;
  const std::int64_t k = static_cast<std::int64_t>(logits.size()) / n;
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const S* row = logits.data() + i * k;
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

// ------------------------------------------------------------- optimizer

template <typename S>
void sgd_step(std::span<const ParamRef<S>> params, OptimizerState<S>& state,
              const SgdHyper& hyper, double lr) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.value->shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.velocity.size()) +
                     " params, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef<S>& p = params[i];
    Tensor<S>& v = state.velocity[i];
    if (p.value->shape() != v.shape() || p.grad->shape() != v.shape()) {
      throw ShapeError("optimizer: shape mismatch for " + p.name);
    }
    if (!p.trainable) continue;
    const double wd = p.decay ? hyper.weight_decay : 0.0;
    S* w = p.value->data();
    const S* g = p.grad->data();
    S* vel = v.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      vel[j] = static_cast<S>(hyper.momentum * vel[j] + g[j] + wd * w[j]);
      w[j] = static_cast<S>(w[j] - lr * vel[j]);
    }
  }
  ++state.step;
}

// ------------------------------------------------------------- schedule

double lr_at(const Schedule& s, std::int64_t step, std::int64_t total_steps) {
  if (s.kind == Schedule::Kind::kMultiStep) {
    const auto passed = std::count_if(s.milestones.begin(), s.milestones.end(),
                                      [&](std::int64_t m) { return step >= m; });
    return s.base_lr * std::pow(s.gamma, static_cast<double>(passed));
  }
  if (step < s.warmup_steps) {
    return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const std::int64_t span = total_steps - s.warmup_steps;
  if (span <= 0) return s.base_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - s.warmup_steps) / static_cast<double>(span));
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ------------------------------------------------------------- configs

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (dropout >= 1.0) throw ConfigError("dropout must be < 1");
  if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be >= 1");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.dropout = j.value("dropout", c.dropout);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.gamma = j.value("gamma", c.gamma);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("milestones")) c.milestones = j.at("milestones").get<std::vector<std::int64_t>>();
    if (j.contains("schedule")) {
      const auto s = j.at("schedule").get<std::string>();
      if (s == "cosine") {
        c.schedule = Schedule::Kind::kCosine;
      } else if (s == "multistep") {
        c.schedule = Schedule::Kind::kMultiStep;
      } else {
        throw ConfigError("unknown schedule '" + s + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

SyntheticTask task_from_json(const nlohmann::json& j, SyntheticTask t) {
  try {
    if (j.contains("kind")) t.kind = parse_task_kind(j.at("kind").get<std::string>());
    t.clip_length = j.value("clip_length", t.clip_length);
    t.frame_size = j.value("frame_size", t.frame_size);
    t.num_train = j.value("num_train", t.num_train);
    t.num_val = j.value("num_val", t.num_val);
    t.noise_std = j.value("noise_std", t.noise_std);
    t.seed = j.value("seed", t.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task config: ") + e.what());
  }
  t.validate();
  return t;
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"epoch", epoch},
          {"loss", loss},
          {"train_acc", train_accuracy},
          {"val_acc", val_accuracy},
          {"lr", lr}};
}

// ------------------------------------------------------------- training

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

NetworkConfig adapt_to_task(NetworkConfig cfg, const SyntheticTask& task) {
  cfg.in_channels = 1;
  cfg.input_size = task.frame_size;
  cfg.num_classes = task.num_classes();
  cfg.validate();
  return cfg;
}

Tensor32 gather_batch(const Dataset& data, std::span<const std::size_t> indices,
                      std::int64_t segments, SampleMode mode, std::uint64_t seed) {
  if (indices.empty()) throw ShapeError("gather_batch: empty batch");
  const Shape clip = data.at(indices[0]).video.shape();
  Tensor32 batch(Shape{static_cast<std::int64_t>(indices.size()), segments, clip.c, clip.h,
                       clip.w});
  const std::size_t frame = clip.frame_size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Clip& c = data.at(indices[b]);
    if (c.video.shape() != clip) throw ShapeError("gather_batch: clips differ in shape");
    SamplerSpec spec{clip.t, segments, mode, mix(seed, indices[b])};
    const auto frames = segment_sample(spec);
    for (std::int64_t t = 0; t < segments; ++t) {
      const float* src = c.video.frame(0, frames[static_cast<std::size_t>(t)]);
      std::copy(src, src + frame, batch.frame(static_cast<std::int64_t>(b), t));
    }
  }
  return batch;
}

double evaluate(Network<float>& net, const Dataset& data, std::int64_t batch_size) {
  if (data.empty()) return 0.0;
  std::int64_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Tensor32 x = gather_batch(data, idx, net.config().frames, SampleMode::kEvalCenter, 0);
    const auto pred = argmax_rows(net.forward(x, Mode::kEval));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (pred[i] == data[idx[i]].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_on(const NetworkConfig& net_cfg, const Dataset& train_set,
                     const Dataset& val_set, const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw ConfigError("empty training set");
  TrainResult result;
  result.net_config = net_cfg;
  if (tc.dropout >= 0.0) result.net_config.dropout = tc.dropout;
  result.net_config.validate();
  result.network = std::make_unique<Network<float>>(result.net_config, mix(tc.seed, 1));
  Network<float>& net = *result.network;

  const std::int64_t n = static_cast<std::int64_t>(train_set.size());
  const std::int64_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const std::int64_t total_steps = steps_per_epoch * tc.epochs;
  Schedule sched;
  sched.kind = tc.schedule;
  sched.base_lr = tc.lr;
  sched.gamma = tc.gamma;
  sched.warmup_steps = tc.warmup_epochs * steps_per_epoch;
  for (std::int64_t m : tc.milestones) sched.milestones.push_back(m * steps_per_epoch);

  const SgdHyper hyper{tc.momentum, tc.weight_decay};
  OptimizerState<float> opt;
  std::vector<ParamRef<float>> params = net.parameters();
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::vector<int> labels;
  std::int64_t step = 0;

  for (std::int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix(tc.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    const double epoch_lr = lr_at(sched, step, total_steps);
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = static_cast<std::size_t>(b * tc.batch_size);
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(tc.batch_size));
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Tensor32 x = gather_batch(train_set, idx, net.config().frames,
                                      SampleMode::kTrainRandom,
                                      mix(tc.seed, static_cast<std::uint64_t>(step) + 7));
      labels.clear();
      for (std::size_t i : idx) labels.push_back(train_set[i].label);

      const Tensor32 logits = net.forward(x, Mode::kTrain);
      const LossResult<float> lr = cross_entropy(logits, labels);
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
      loss_sum += lr.loss * static_cast<double>(idx.size());

      net.zero_grad();
      net.backward(lr.grad_logits);
      sgd_step<float>(params, opt, hyper, lr_at(sched, step, total_steps));
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(n);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    m.val_accuracy = evaluate(net, val_set);
    m.lr = epoch_lr;
    result.history.push_back(m);
  }
  return result;
}

TrainResult train(const NetworkConfig& net_cfg, const SyntheticTask& task,
                  const TrainConfig& train_cfg) {
  const NetworkConfig cfg = adapt_to_task(net_cfg, task);
  const auto [train_set, val_set] = gen_dataset(task);
  return train_on(cfg, train_set, val_set, train_cfg);
}

template LossResult<float> cross_entropy(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensor<double>&, std::span<const int>);
template std::vector<int> argmax_rows(const Tensor<float>&);
template std::vector<int> argmax_rows(const Tensor<double>&);
template void sgd_step(std::span<const ParamRef<float>>, OptimizerState<float>&,
                       const SgdHyper&, double);
template void sgd_step(std::span<const ParamRef<double>>, OptimizerState<double>&,
                       const SgdHyper&, double);

}  // namespace vshuffle
