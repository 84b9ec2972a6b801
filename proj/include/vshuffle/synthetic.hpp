#ifndef VSHUFFLE_SYNTHETIC_HPP
#define VSHUFFLE_SYNTHETIC_HPP

// Synthetic temporal-reasoning video tasks.
//
// motion_direction: a bright disk translates up / down / left / right
//   (labels 0..3).
// frame_order: a drifting disk grows over the clip; label 0 plays the clip
//   forward, label 1 reversed. Clip content is drawn independently of the
//   label and the reversed clip holds exactly the same frames, so any
//   unordered set of frames carries no label information.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vshuffle/tensor.hpp"

namespace vshuffle {

enum class TaskKind { kMotionDirection, kFrameOrder };

std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

struct SyntheticTask {
  TaskKind kind = TaskKind::kFrameOrder;
  std::int64_t clip_length = 16;
  std::int64_t frame_size = 16;
  std::int64_t num_train = 2000;
  std::int64_t num_val = 500;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  std::int64_t num_classes() const { return kind == TaskKind::kMotionDirection ? 4 : 2; }
  void validate() const;
};

struct Clip {
  Tensor32 video;  // (1, clip_length, 1, H, W)
  int label = 0;
};

using Dataset = std::vector<Clip>;

// Deterministic in task.seed. Labels cycle through the classes, so every
// class count is within one of the others.
std::pair<Dataset, Dataset> gen_dataset(const SyntheticTask& task);

// Frames in reverse temporal order.
Tensor32 reverse_clip(const Tensor32& video);

// Motion label after playing a motion_direction clip backwards.
int reversed_motion_label(int label);

}  // namespace vshuffle

#endif  // VSHUFFLE_SYNTHETIC_HPP
