#include "vshuffle/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vshuffle {

std::string_view to_string(TaskKind k) {
  return k == TaskKind::kMotionDirection ? "motion_direction" : "frame_order";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "motion_direction") return TaskKind::kMotionDirection;
  if (s == "frame_order") return TaskKind::kFrameOrder;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

void SyntheticTask::validate() const {
  if (frame_size < 8) {
    throw ConfigError("frame_size " + std::to_string(frame_size) +
                      " too small for the blob trajectory (need >= 8)");
  }
  if (clip_length < 2) throw ConfigError("clip_length must be >= 2");
  if (num_train < 1 || num_val < 1) throw ConfigError("dataset sizes must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Disk {
  double cx, cy, radius, amplitude;
};

void render(float* plane, std::int64_t size, double background, const Disk& d,
            double noise_std, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - d.cx;
      const double dy = static_cast<double>(y) + 0.5 - d.cy;
      const double cover = std::clamp(d.radius - std::sqrt(dx * dx + dy * dy) + 0.5, 0.0, 1.0);
      double v = background + d.amplitude * cover;
      if (noise_std > 0.0) v += noise_std * noise(rng);
      plane[y * size + x] = static_cast<float>(v);
    }
  }
}

Tensor32 frame_order_clip(const SyntheticTask& task, std::mt19937_64& rng) {
  const std::int64_t L = task.clip_length;
  const double S = static_cast<double>(task.frame_size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double r0 = uni(0.12, 0.2) * S;
  const double r1 = r0 + uni(0.15, 0.25) * S;
  const double x0 = uni(0.35, 0.65) * S;
  const double y0 = uni(0.35, 0.65) * S;
  const double drift_x = uni(-0.15, 0.15) * S;
  const double drift_y = uni(-0.15, 0.15) * S;
  const double background = uni(0.0, 0.2);
  const double amplitude = uni(0.6, 1.0);
  Tensor32 clip(Shape{1, L, 1, task.frame_size, task.frame_size});
  for (std::int64_t t = 0; t < L; ++t) {
    const double a = static_cast<double>(t) / static_cast<double>(L - 1);
    const Disk d{x0 + a * drift_x, y0 + a * drift_y, r0 + a * (r1 - r0), amplitude};
    render(clip.frame(0, t), task.frame_size, background, d, task.noise_std, rng);
  }
  return clip;
}

Tensor32 motion_clip(const SyntheticTask& task, int label, std::mt19937_64& rng) {
  const std::int64_t L = task.clip_length;
  const double S = static_cast<double>(task.frame_size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double radius = uni(0.1, 0.16) * S;
  const double travel = uni(0.35, 0.5) * S;
  const double jitter = uni(-0.08, 0.08) * S;
  const double cross = uni(0.3, 0.7) * S;
  const double background = uni(0.0, 0.2);
  const double amplitude = uni(0.6, 1.0);
  // Signed direction along the moving axis; rows grow downwards.
  const double sign = (label == 0 || label == 2) ? -1.0 : 1.0;
  const bool vertical = label == 0 || label == 1;
  const double start = 0.5 * S - sign * 0.5 * travel + jitter;
  Tensor32 clip(Shape{1, L, 1, task.frame_size, task.frame_size});
  for (std::int64_t t = 0; t < L; ++t) {
    const double a = static_cast<double>(t) / static_cast<double>(L - 1);
    const double along = start + sign * a * travel;
    const Disk d = vertical ? Disk{cross, along, radius, amplitude}
                            : Disk{along, cross, radius, amplitude};
    render(clip.frame(0, t), task.frame_size, background, d, task.noise_std, rng);
  }
  return clip;
}

Dataset make_split(const SyntheticTask& task, std::int64_t count, std::uint64_t split) {
  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  const int classes = static_cast<int>(task.num_classes());
  for (std::int64_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(splitmix(splitmix(task.seed) ^ splitmix(split * 0x100000001ULL +
                                                                 static_cast<std::uint64_t>(i))));
    const int label = static_cast<int>(i % classes);
    Clip c;
    c.label = label;
    if (task.kind == TaskKind::kFrameOrder) {
      Tensor32 forward = frame_order_clip(task, rng);
      c.video = label == 0 ? std::move(forward) : reverse_clip(forward);
    } else {
      c.video = motion_clip(task, label, rng);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

Tensor32 reverse_clip(const Tensor32& video) {
  const Shape& s = video.shape();
  Tensor32 out(s);
  const std::size_t frame = s.frame_size();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t t = 0; t < s.t; ++t) {
      const float* src = video.frame(n, s.t - 1 - t);
      std::copy(src, src + frame, out.frame(n, t));
    }
  }
  return out;
}

int reversed_motion_label(int label) {
  static constexpr int kMap[4] = {1, 0, 3, 2};
  if (label < 0 || label > 3) throw ConfigError("motion label out of range");
  return kMap[label];
}

std::pair<Dataset, Dataset> gen_dataset(const SyntheticTask& task) {
  task.validate();
  return {make_split(task, task.num_train, 1), make_split(task, task.num_val, 2)};
}

}  // namespace vshuffle
