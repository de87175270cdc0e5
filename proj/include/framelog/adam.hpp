#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "framelog/autograd.hpp"

namespace framelog::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First/second moment accumulators, one pair per parameter, in the order the
/// parameters are passed to `adam_step`.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One bias-corrected Adam update over `params`, reading each parameter's
/// gradient (an absent gradient counts as zero). Moments are allocated on the
/// first call. Throws ValueError naming the parameter on a non-finite gradient.
void adam_step(std::span<const Var> params, AdamState& state);

void zero_grads(std::span<const Var> params);

}  // namespace framelog::nn
