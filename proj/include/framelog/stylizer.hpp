#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "framelog/autograd.hpp"

namespace framelog::train {

/// Residual encoder/decoder that rewrites a convolution kernel (O, C, k, k),
/// treating the O filters as a batch of C-channel k x k images.
struct StylizerSpec {
  int width = 16;           // feature channels inside the stylizer
  int residual_blocks = 5;
  float output_gain = 0.1f; // init scale of the last decoder conv relative to He
};

class Stylizer {
 public:
  static Stylizer build(const StylizerSpec& spec, nn::Shape kernel_shape, std::uint64_t seed);
  /// Pass-through stylizer: `apply` returns its input node unchanged.
  static Stylizer identity(nn::Shape kernel_shape);

  bool is_identity() const { return identity_; }
  nn::Shape kernel_shape() const { return kernel_shape_; }

  /// Encodes the style image (1, C, H, W) once and keeps its per-channel
  /// feature mean/std for injection into encoded kernels.
  void set_style(const nn::Tensor& style);
  bool has_style() const { return !style_mean_.empty(); }

  /// kernel + decoder(body(inject(encoder(kernel)))). Same shape as `kernel`.
  nn::Var apply(nn::Tape* tape, const nn::Var& kernel) const;

  std::vector<nn::Var> parameters() const;
  /// Weights and style statistics under "stylizer." names.
  std::vector<std::pair<std::string, nn::Tensor>> state() const;

 private:
  nn::Var encode(nn::Tape* tape, const nn::Var& x) const;

  StylizerSpec spec_;
  nn::Shape kernel_shape_;
  bool identity_ = false;
  nn::Var enc1_, enc2_;
  std::vector<std::pair<nn::Var, nn::Var>> body_;
  nn::Var dec1_, dec2_;
  nn::Tensor style_mean_, style_std_;
};

}  // namespace framelog::train
