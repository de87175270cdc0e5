#pragma once

#include <span>
#include <utility>
#include <vector>

#include "framelog/autograd.hpp"

namespace framelog::nn {

// Every op takes an optional tape. With a null tape (or when no input needs a
// gradient) the op is a plain forward computation.

/// 2-D cross-correlation without bias. x: (N, C, H, W), kernel: (O, C, kH, kW).
Var conv2d(Tape* tape, const Var& x, const Var& kernel, int stride, int pad);

/// Output spatial extent of a convolution or pooling window.
int conv_out_extent(int in, int kernel, int stride, int pad);

enum class Mode { Train, Eval };

struct RunningStats {
  Tensor mean;  // (1, C, 1, 1)
  Tensor var;   // (1, C, 1, 1)

  static RunningStats identity(int channels);
};

struct BatchNormConfig {
  float eps = 1e-5f;
  float momentum = 0.1f;
};

/// Per-channel batch normalization. gamma/beta: (1, C, 1, 1).
/// Train mode normalizes with batch statistics and, if `stats` is non-null,
/// folds them into the running estimates. Eval mode reads `stats`.
Var batch_norm(Tape* tape, const Var& x, const Var& gamma, const Var& beta,
               RunningStats* stats, Mode mode,
               const BatchNormConfig& cfg = {});
Var batch_norm_eval(Tape* tape, const Var& x, const Var& gamma,
                    const Var& beta, const RunningStats& stats,
                    const BatchNormConfig& cfg = {});

Var relu(Tape* tape, const Var& x);
Var add(Tape* tape, const Var& a, const Var& b);

/// Max pooling; padded positions never win.
Var max_pool(Tape* tape, const Var& x, int kernel, int stride, int pad = 0);
/// (N, C, H, W) -> (N, C, 1, 1) channel means.
Var global_avg_pool(Tape* tape, const Var& x);
/// Nearest-neighbour resize to (out_h, out_w).
Var upsample_nearest(Tape* tape, const Var& x, int out_h, int out_w);

/// Affine map. x: (N, F, 1, 1), weight: (O, F, 1, 1), bias: (1, O, 1, 1).
Var linear(Tape* tape, const Var& x, const Var& weight, const Var& bias);

/// Sum of all elements weighted by `weights` (same shape as x); a scalar.
Var weighted_sum(Tape* tape, const Var& x, const Tensor& weights);
Var sum(Tape* tape, const Var& x);

struct XentResult {
  Var loss;     // mean negative log-likelihood over the batch, shape (1,1,1,1)
  Tensor probs; // (N, K, 1, 1)
};

/// Softmax cross-entropy over logits (N, K, 1, 1) with one target per sample.
XentResult softmax_xent(Tape* tape, const Var& logits,
                        std::span<const int> targets);

/// Single-sample form: returns (loss, probabilities).
std::pair<double, std::vector<float>> softmax_xent(std::span<const float> logits,
                                                   int target);
std::vector<float> softmax(std::span<const float> logits);

}  // namespace framelog::nn
