#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace framelog::nn {

/// Extent of a rank-4 tensor in (batch, channels, height, width) order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major float32 tensor. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }

  /// Pointer to the start of sample `n`.
  float* sample(int n) { return data_.data() + n * sample_size(); }
  const float* sample(int n) const { return data_.data() + n * sample_size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape_.c) * shape_.h * shape_.w;
  }

  void fill(float v);
  /// Reinterprets the data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;
  /// Copies samples [begin, begin + count) into a new tensor.
  Tensor slice_batch(int begin, int count) const;
  /// Gathers the listed samples, in order, into a new tensor.
  Tensor gather_batch(std::span<const int> indices) const;

  bool all_finite() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Throws ValueError if any element of `t` is NaN or infinite.
void require_finite(const Tensor& t, const std::string& where);

/// Stacks single-sample tensors of identical shape along the batch axis.
Tensor stack(std::span<const Tensor> samples);

}  // namespace framelog::nn
