#ifndef VSHUFFLE_TRAINING_HPP
#define VSHUFFLE_TRAINING_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "vshuffle/layers.hpp"
#include "vshuffle/network.hpp"
#include "vshuffle/synthetic.hpp"
#include "vshuffle/temporal_ops.hpp"

namespace vshuffle {

// ------------------------------------------------------------------ loss

template <typename S>
struct LossResult {
  double loss = 0.0;
  Tensor<S> grad_logits;
};

// Mean softmax cross-entropy over logits (N, 1, K, 1, 1);
// grad = (softmax - onehot) / N.
template <typename S>
LossResult<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels);

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& logits);

// ------------------------------------------------------------- optimizer

struct SgdHyper {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

template <typename S>
struct OptimizerState {
  std::vector<Tensor<S>> velocity;
  std::int64_t step = 0;
};

// v <- momentum * v + grad + wd * param;  param <- param - lr * v.
// Weight decay applies only to params with `decay` set; untrainable params
// are skipped. Buffers are created on first use.
template <typename S>
void sgd_step(std::span<const ParamRef<S>> params, OptimizerState<S>& state,
              const SgdHyper& hyper, double lr);

// ------------------------------------------------------------- schedule

struct Schedule {
  enum class Kind { kMultiStep, kCosine };
  Kind kind = Kind::kCosine;
  double base_lr = 0.01;
  std::vector<std::int64_t> milestones;  // in steps
  double gamma = 0.1;
  std::int64_t warmup_steps = 0;
};

// multistep: base * gamma^(#milestones <= step)
// cosine:    base * step / warmup during warmup, then
//            base * 0.5 * (1 + cos(pi * (step - warmup) / (total - warmup)))
double lr_at(const Schedule& s, std::int64_t step, std::int64_t total_steps);

// ------------------------------------------------------------- training

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double dropout = -1.0;  // < 0 keeps the network config's rate
  std::int64_t batch_size = 16;
  std::int64_t epochs = 10;
  Schedule::Kind schedule = Schedule::Kind::kCosine;
  std::vector<std::int64_t> milestones;  // in epochs
  double gamma = 0.1;
  std::int64_t warmup_epochs = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SyntheticTask task_from_json(const nlohmann::json& j, SyntheticTask base = {});

struct EpochMetrics {
  std::int64_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  NetworkConfig net_config;
  std::vector<EpochMetrics> history;
  std::unique_ptr<Network<float>> network;
};

// Adapts the network to the task (input channels, frame size, classes) and
// trains with SGD; every random choice derives from train_cfg.seed and
// task.seed.
TrainResult train(const NetworkConfig& net_cfg, const SyntheticTask& task,
                  const TrainConfig& train_cfg);

// Same, on pre-generated splits.
TrainResult train_on(const NetworkConfig& net_cfg, const Dataset& train_set,
                     const Dataset& val_set, const TrainConfig& train_cfg);

NetworkConfig adapt_to_task(NetworkConfig cfg, const SyntheticTask& task);

// Batches of clips at the network's frame count via the given sampling mode.
Tensor32 gather_batch(const Dataset& data, std::span<const std::size_t> indices,
                      std::int64_t segments, SampleMode mode, std::uint64_t seed);

// Top-1 accuracy with eval_center sampling, batchnorm running statistics and
// dropout disabled.
double evaluate(Network<float>& net, const Dataset& data, std::int64_t batch_size = 32);

}  // namespace vshuffle

#endif  // VSHUFFLE_TRAINING_HPP
