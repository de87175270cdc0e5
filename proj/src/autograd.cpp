#include "framelog/autograd.hpp"

#include "framelog/error.hpp"

namespace framelog::nn {

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0f);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return node;
}

void Tape::backward(const Var& loss) {
  if (steps_.empty()) {
    throw ValueError("backward called before any forward pass was recorded");
  }
  if (!loss || loss->value.size() != 1) {
    throw ShapeError("backward expects a scalar loss");
  }
  loss->grad_buffer()[0] += 1.0f;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

}  // namespace framelog::nn
