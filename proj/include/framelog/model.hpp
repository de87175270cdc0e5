#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "framelog/arch.hpp"
#include "framelog/autograd.hpp"
#include "framelog/ops.hpp"

namespace framelog::model {

using nn::Mode;
using nn::Tape;
using nn::Tensor;
using nn::Var;

/// Positions in the forward pass at which activations can be tapped.
enum class Stage { Stem = 0, Stage1, Stage2, Stage3, Stage4, Head };

Stage stage_of(arch::TruncationPoint p);

struct ForwardOptions {
  /// Replaces the stem convolution kernel (must match its shape). Used to
  /// route an externally produced kernel through the classifier.
  Var stem_kernel;
  /// Stop after this stage and return its activation instead of logits.
  Stage stop = Stage::Head;
  /// Called with each stage's output activation as it is produced.
  std::function<void(Stage, const Tensor&)> tap;
};

/// Bottleneck residual network built from an ArchSpec. Parameters are shared
/// graph nodes, so the type is move-only; use `clone()` for a deep copy.
class ResNet {
 public:
  static ResNet build(const arch::ArchSpec& spec, std::uint64_t seed);

  ResNet(ResNet&&) = default;
  ResNet& operator=(ResNet&&) = default;
  ResNet(const ResNet&) = delete;
  ResNet& operator=(const ResNet&) = delete;

  ResNet clone() const;

  const arch::ArchSpec& spec() const { return spec_; }

  /// Trainable parameters in execution order (fc last).
  std::vector<Var> parameters() const;
  std::vector<Var> backbone_parameters() const;
  std::vector<Var> head_parameters() const;

  /// All persistent tensors (parameters and batch-norm running statistics) by
  /// name, in a stable order.
  std::vector<std::pair<std::string, Tensor>> state() const;
  /// Overwrites tensors present in `tensors`; names absent are left alone.
  /// Throws ShapeError listing every name whose shape differs.
  void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors);

  /// Re-initializes the classification head for `num_classes` outputs.
  void reset_head(int num_classes, std::uint64_t seed);

  /// Train mode updates batch-norm running statistics.
  Var forward(Tape* tape, const Var& x, Mode mode, const ForwardOptions& opts = {});
  /// Eval-mode forward without a tape; safe to call concurrently.
  Var forward_eval(const Var& x, const ForwardOptions& opts = {}) const;

  Tensor infer(const Tensor& x) const;

  const Var& stem_kernel() const { return stem_.kernel; }
  /// Number of convolutions executed up to and including `stop`.
  int conv_count(Stage stop) const;

 private:
  struct ConvBn {
    std::string name;  // e.g. "layer1.0.conv1"; batch norm uses the bn name
    std::string bn_name;
    Var kernel;
    Var gamma;
    Var beta;
    nn::RunningStats stats;
    int stride = 1;
    int pad = 0;
  };
  struct Block {
    ConvBn conv1, conv2, conv3;
    std::optional<ConvBn> downsample;
  };

  ResNet() = default;
  template <class Self>
  static Var run(Self& self, Tape* tape, const Var& x, Mode mode,
                 const ForwardOptions& opts);
  template <class Self>
  static Var conv_bn(Self& self, const ConvBn& layer, nn::RunningStats* stats,
                     Tape* tape, const Var& x, Mode mode, const Var& kernel_override);

  std::vector<const ConvBn*> layers() const;
  std::vector<ConvBn*> layers();

  arch::ArchSpec spec_;
  ConvBn stem_;
  std::vector<std::vector<Block>> stages_;
  Var fc_weight_;
  Var fc_bias_;
};

/// Prefix of a network ending at a truncation point. Holds a shared handle to
/// the source network; computes exactly the full model's activation there.
class FeatureExtractor {
 public:
  FeatureExtractor(std::shared_ptr<const ResNet> net, arch::TruncationPoint point);

  Tensor extract(const Tensor& x) const;
  arch::TruncationPoint point() const { return point_; }
  const ResNet& network() const { return *net_; }
  int conv_count() const;
  /// FNV-1a over the names and raw bytes of every tensor the prefix reads.
  std::uint64_t fingerprint() const;
  /// Per-sample output shape for an input of the given spatial size.
  nn::Shape output_shape(int channels, int height, int width) const;

 private:
  std::shared_ptr<const ResNet> net_;
  arch::TruncationPoint point_;
};

FeatureExtractor truncate(std::shared_ptr<const ResNet> net, arch::TruncationPoint point);

}  // namespace framelog::model
