#include "framelog/adam.hpp"

#include <cmath>

#include "framelog/error.hpp"

namespace framelog::nn {

void adam_step(std::span<const Var> params, AdamState& state) {
  const AdamConfig& cfg = state.config;
  if (!(cfg.lr > 0.0f)) throw ValueError("adam: learning rate must be positive");
  if (state.first_moment.empty()) {
    for (const Var& p : params) {
      state.first_moment.emplace_back(p->value.shape(), 0.0f);
      state.second_moment.emplace_back(p->value.shape(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Var& p = params[k];
    if (state.first_moment[k].shape() != p->value.shape()) {
      throw ShapeError("adam: moment shape mismatch for parameter '" + p->name + "'");
    }
    if (!p->grad.empty() && !p->grad.all_finite()) {
      throw ValueError("adam: non-finite gradient for parameter '" + p->name + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const float bias1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
  const float bias2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Node& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    const bool has_grad = !p.grad.empty();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = has_grad ? p.grad[i] : 0.0f;
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
      const float mhat = m[i] / bias1;
      const float vhat = v[i] / bias2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void zero_grads(std::span<const Var> params) {
  for (const Var& p : params) p->zero_grad();
}

}  // namespace framelog::nn
