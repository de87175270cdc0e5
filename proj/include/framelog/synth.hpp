#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "framelog/dataset.hpp"
#include "framelog/image.hpp"

namespace framelog::data {

/// Synthetic stand-in for a gameplay-event corpus: each class is a distinct
/// shape "effect" drifting over a shared noisy terrain background.
struct SynthConfig {
  int classes = 10;
  int clips_per_class = 10;
  int frames_per_clip = 90;
  int height = 64;
  int width = 64;
  int fps = 30;
  std::uint64_t seed = 0;
  /// Pattern family. Task 0 is the event set; task 1 draws its classes from a
  /// disjoint shape vocabulary (used to pretrain teachers).
  int task = 0;
};

constexpr int kShapesPerTask = 10;

std::vector<std::string> synth_class_names(const SynthConfig& cfg);

/// Pure function of (config, class, clip, frame).
Image synth_render(const SynthConfig& cfg, int cls, int clip, int frame);

/// Renders every frame to `out_dir/frames/<class>/` and writes
/// `out_dir/manifest.jsonl`. Returns the set as if loaded from that manifest.
LabeledFrameSet synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// In-memory variant used by tests and benchmarks: pixels in [0, 1].
FrameTensors synth_tensors(const SynthConfig& cfg);

}  // namespace framelog::data
