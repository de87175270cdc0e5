#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace framelog::arch {

struct StemSpec {
  int kernel = 7;
  int stride = 2;
  int out_channels = 64;
  bool maxpool = true;
  int pool_kernel = 3;
  int pool_stride = 2;
  int pool_pad = 1;

  friend bool operator==(const StemSpec&, const StemSpec&) = default;
};

/// Parametric bottleneck residual classifier. Defaults describe the
/// 152-layer, 224x224 family.
///
/// Every block is 1x1 (inner) -> 3x3 (inner, carries the stage stride) ->
/// 1x1 (expansion * base width), with a 1x1 projection shortcut whenever the
/// block changes channel count or resolution. Pruning scales only the inner
/// widths: inner = floor(prune_ratio * base width).
struct ArchSpec {
  std::string name = "custom";
  StemSpec stem;
  std::array<int, 4> depths{3, 8, 36, 3};
  std::array<int, 4> widths{64, 128, 256, 512};
  int expansion = 4;
  double prune_ratio = 1.0;
  int num_classes = 10;
  int input_channels = 3;
  int input_height = 224;
  int input_width = 224;

  int inner_width(int stage) const;
  int out_width(int stage) const { return expansion * widths.at(stage); }
  static int stage_stride(int stage) { return stage == 0 ? 1 : 2; }
  int feature_width() const { return out_width(3); }

  /// Throws ValueError describing the first violated invariant.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// floor(p * width) with a tolerance for binary rounding of p.
int pruned_width(double p, int width);

/// Scales the retained inner fraction by `p` (ratios compose
/// multiplicatively, so p = 1 is always the identity).
ArchSpec apply_prune_ratio(const ArchSpec& spec, double p);

/// Named presets: baseline152, thinet30, thinet50, thinet70, mini,
/// mini-thinet30, mini-thinet50, mini-thinet70.
ArchSpec preset(std::string_view name);
std::vector<std::string> preset_names();

enum class TruncationPoint { Stem, AfterStage1, AfterStage2 };
std::string to_string(TruncationPoint p);
TruncationPoint parse_truncation_point(std::string_view s);

/// Number of stages (0..4) whose blocks precede the truncation point.
int stages_before(TruncationPoint p);

/// Sum of outC * inC * kH * kW over every convolution (stem, block convs,
/// shortcut projections). Excludes batch-norm and fully-connected weights.
std::int64_t count_conv_params(const ArchSpec& spec);
/// Same count restricted to the prefix ending at `point`.
std::int64_t count_conv_params(const ArchSpec& spec, TruncationPoint point);

/// Batch-norm scale/shift pairs (2 per normalized channel).
std::int64_t count_bn_params(const ArchSpec& spec);
std::int64_t count_fc_params(const ArchSpec& spec);
/// Conv + batch-norm + fully-connected trainable parameters.
std::int64_t count_total_params(const ArchSpec& spec);
/// Conv + batch-norm parameters of the prefix ending at `point`.
std::int64_t count_total_params(const ArchSpec& spec, TruncationPoint point);

/// One convolution in execution order.
struct ConvLayout {
  std::string name;
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
  int pad;
  std::int64_t weights() const {
    return static_cast<std::int64_t>(out_channels) * in_channels * kernel * kernel;
  }
};
std::vector<ConvLayout> conv_layout(const ArchSpec& spec);

struct MemoryEstimate {
  std::int64_t param_bytes = 0;
  std::int64_t activation_bytes = 0;
  std::int64_t total_bytes() const { return param_bytes + activation_bytes; }
};

/// Analytic float32 footprint: all trainable parameters plus the peak of
/// simultaneously live activations under sequential layer-by-layer execution
/// (a block's input stays live until its residual addition).
MemoryEstimate estimate_memory(const ArchSpec& spec, int channels, int height,
                               int width, int batch);
MemoryEstimate estimate_memory(const ArchSpec& spec, TruncationPoint point, int channels,
                               int height, int width, int batch);

/// Key-value config text (see docs/FORMATS.md). Parsing starts from the
/// default spec and overrides the keys present.
std::string to_config(const ArchSpec& spec);
ArchSpec parse_config(std::string_view text);

}  // namespace framelog::arch
