#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "framelog/tensor.hpp"

namespace framelog::nn {

/// A value in the computation graph. Parameters are long-lived nodes owned by
/// a model; intermediate nodes live as long as the tape step that made them.
struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::string name;

  /// Allocates a zero gradient shaped like `value` if none exists yet.
  Tensor& grad_buffer();
  void zero_grad() { grad = Tensor(); }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value, std::string name);

/// Reverse-mode tape. Ops append a backward closure when given a tape and at
/// least one input requires a gradient; `backward` replays them in reverse.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded step in reverse.
  /// `loss` must be a single-element tensor produced on this tape.
  void backward(const Var& loss);

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace framelog::nn
