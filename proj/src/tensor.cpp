#include "framelog/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "framelog/error.hpp"

namespace framelog::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::slice_batch(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > shape_.n) {
    throw ShapeError("batch slice [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     shape_.str());
  }
  Tensor out({count, shape_.c, shape_.h, shape_.w});
  std::memcpy(out.data(), sample(begin), sizeof(float) * count * sample_size());
  return out;
}

Tensor Tensor::gather_batch(std::span<const int> indices) const {
  Tensor out({static_cast<int>(indices.size()), shape_.c, shape_.h, shape_.w});
  const std::size_t stride = sample_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= shape_.n) {
      throw ShapeError("batch index " + std::to_string(idx) +
                       " out of range for " + shape_.str());
    }
    std::memcpy(out.data() + i * stride, sample(idx), sizeof(float) * stride);
  }
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) {
    throw ValueError("non-finite value in " + where);
  }
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("cannot stack zero tensors");
  const Shape s = samples.front().shape();
  if (s.n != 1) throw ShapeError("stack expects single-sample tensors");
  Tensor out({static_cast<int>(samples.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != s) {
      throw ShapeError("stack shape mismatch: " + samples[i].shape().str() +
                       " vs " + s.str());
    }
    std::memcpy(out.sample(static_cast<int>(i)), samples[i].data(),
                sizeof(float) * s.numel());
  }
  return out;
}

}  // namespace framelog::nn
