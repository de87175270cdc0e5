#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framelog/image.hpp"
#include "framelog/tensor.hpp"

namespace framelog::data {

struct LabeledFrame {
  std::string path;  // as written in the manifest, relative to the set root
  int label = 0;     // index into LabeledFrameSet::classes
  int clip = 0;
  int index = 0;     // frame position inside the clip

  friend bool operator==(const LabeledFrame&, const LabeledFrame&) = default;
};

/// Manifest-backed frame collection. Frames are kept in canonical order:
/// (label, clip, index). One-hot index of a class is its position in
/// `classes`.
struct LabeledFrameSet {
  std::vector<std::string> classes;
  std::vector<LabeledFrame> frames;
  int height = 0;
  int width = 0;
  int fps = 30;
  std::filesystem::path root;  // directory relative paths resolve against

  int class_index(std::string_view name) const;
  std::filesystem::path resolve(const LabeledFrame& f) const;
  /// Frames per class, indexed like `classes`.
  std::vector<int> class_counts() const;
};

void canonicalize(LabeledFrameSet& set);

/// Parses a JSON Lines manifest (header line, then one object per frame).
/// Errors carry the 1-based line number.
LabeledFrameSet load_manifest(const std::filesystem::path& path);
std::string manifest_text(const LabeledFrameSet& set);
void write_manifest(const LabeledFrameSet& set, const std::filesystem::path& path);

/// FNV-1a over the manifest text and every frame file's bytes.
std::uint64_t dataset_hash(const LabeledFrameSet& set);

enum class SplitMode {
  FrameStride,  // stride rule over frames in canonical order
  ClipStride,   // stride rule over clips; whole clips go to one side
};

struct SplitRule {
  double ratio = 0.8;  // training fraction
  SplitMode mode = SplitMode::FrameStride;
  std::uint64_t seed = 0;  // phase offset of the stride pattern
};

struct Split {
  LabeledFrameSet train;
  LabeledFrameSet test;
};

/// True when position `i` falls in the held-out part under a uniform stride
/// with held-out fraction `test_fraction` (for 0.2 and phase 0: i % 5 == 4).
bool is_test_position(std::size_t i, double test_fraction, std::uint64_t phase);

Split split(const LabeledFrameSet& set, const SplitRule& rule);

std::vector<float> encode_label(const LabeledFrameSet& set, std::string_view name);
std::string decode_label(const LabeledFrameSet& set, std::span<const float> one_hot);

/// Pixels scaled to [0, 1], shape (N, 3, H, W), plus labels in frame order.
struct FrameTensors {
  nn::Tensor images;
  std::vector<int> labels;
  std::vector<int> clips;
  std::vector<std::string> classes;

  int size() const { return images.shape().n; }
  FrameTensors subset(std::span<const int> indices) const;
};

struct TensorSplit {
  FrameTensors train;
  FrameTensors test;
};

/// Indices of held-out samples for frames given in canonical order with
/// their (label, clip) keys.
std::vector<bool> test_mask(std::span<const int> labels, std::span<const int> clips,
                            const SplitRule& rule);
/// Same partition as `split` applied to decoded frames in canonical order.
TensorSplit split(const FrameTensors& frames, const SplitRule& rule);

nn::Tensor image_to_tensor(const Image& img);
FrameTensors decode(const LabeledFrameSet& set);

/// Per-channel standardization with statistics fitted on a training split.
struct Normalizer {
  std::vector<float> mean;
  std::vector<float> stddev;

  static Normalizer fit(const nn::Tensor& images);
  static Normalizer identity(int channels);
  nn::Tensor apply(const nn::Tensor& images) const;

  nn::Tensor mean_tensor() const;
  nn::Tensor stddev_tensor() const;
  static Normalizer from_tensors(const nn::Tensor& mean, const nn::Tensor& stddev);
};

}  // namespace framelog::data
