#include "framelog/stylizer.hpp"

#include <cmath>
#include <random>

#include "framelog/error.hpp"
#include "framelog/ops.hpp"

namespace framelog::train {
namespace {

using nn::Shape;
using nn::Tensor;
using nn::Var;

Var he_kernel(std::mt19937_64& rng, Shape s, float gain, const std::string& name) {
  Tensor t(s);
  std::normal_distribution<float> dist(0.0f, gain * std::sqrt(2.0f / (s.c * s.h * s.w)));
  for (float& v : t.values()) v = dist(rng);
  return nn::parameter(std::move(t), name);
}

}  // namespace

Stylizer Stylizer::build(const StylizerSpec& spec, Shape kernel_shape, std::uint64_t seed) {
  if (spec.width < 1 || spec.residual_blocks < 0) {
    throw ValueError("stylizer width must be >= 1 and residual_blocks >= 0");
  }
  if (kernel_shape.n < 1 || kernel_shape.c < 1 || kernel_shape.h < 1 || kernel_shape.w < 1) {
    throw ShapeError("stylizer: bad kernel shape " + kernel_shape.str());
  }
  Stylizer s;
  s.spec_ = spec;
  s.kernel_shape_ = kernel_shape;
  std::mt19937_64 rng(seed);
  const int c = kernel_shape.c;
  const int w = spec.width;
  s.enc1_ = he_kernel(rng, {w, c, 3, 3}, 1.0f, "stylizer.enc1");
  s.enc2_ = he_kernel(rng, {w, w, 3, 3}, 1.0f, "stylizer.enc2");
  for (int b = 0; b < spec.residual_blocks; ++b) {
    const std::string p = "stylizer.body" + std::to_string(b);
    // second conv starts small so each block begins near identity
    auto a = he_kernel(rng, {w, w, 3, 3}, 1.0f, p + ".conv1");
    auto z = he_kernel(rng, {w, w, 3, 3}, 0.1f, p + ".conv2");
    s.body_.emplace_back(std::move(a), std::move(z));
  }
  s.dec1_ = he_kernel(rng, {w, w, 3, 3}, 1.0f, "stylizer.dec1");
  s.dec2_ = he_kernel(rng, {c, w, 3, 3}, spec.output_gain, "stylizer.dec2");
  return s;
}

Stylizer Stylizer::identity(Shape kernel_shape) {
  Stylizer s;
  s.kernel_shape_ = kernel_shape;
  s.identity_ = true;
  return s;
}

Var Stylizer::encode(nn::Tape* tape, const Var& x) const {
  Var h = nn::relu(tape, nn::conv2d(tape, x, enc1_, 2, 1));
  return nn::relu(tape, nn::conv2d(tape, h, enc2_, 2, 1));
}

void Stylizer::set_style(const Tensor& style) {
  if (identity_) return;
  const Shape s = style.shape();
  if (s.n != 1 || s.c != kernel_shape_.c) {
    throw ShapeError("style image must be (1, " + std::to_string(kernel_shape_.c) +
                     ", H, W), got " + s.str());
  }
  const Tensor f = encode(nullptr, nn::constant(style))->value;
  const Shape fs = f.shape();
  style_mean_ = Tensor({1, fs.c, 1, 1});
  style_std_ = Tensor({1, fs.c, 1, 1});
  const std::size_t plane = fs.plane();
  for (int ch = 0; ch < fs.c; ++ch) {
    const float* p = f.sample(0) + ch * plane;
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += p[i];
    m /= static_cast<double>(plane);
    double v = 0.0;
    for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
    style_mean_[ch] = static_cast<float>(m);
    style_std_[ch] = static_cast<float>(std::sqrt(v / static_cast<double>(plane)));
  }
}

Var Stylizer::apply(nn::Tape* tape, const Var& kernel) const {
  if (!(kernel->value.shape() == kernel_shape_)) {
    throw ShapeError("stylizer built for kernel " + kernel_shape_.str() + ", got " +
                     kernel->value.shape().str());
  }
  if (identity_) return kernel;
  if (!has_style()) throw ValueError("stylizer: set_style must be called before apply");

  const Var e1 = nn::relu(tape, nn::conv2d(tape, kernel, enc1_, 2, 1));
  const Shape mid = e1->value.shape();
  Var h = nn::relu(tape, nn::conv2d(tape, e1, enc2_, 2, 1));
  // statistic injection: normalize over the filter batch, rescale to the style
  h = nn::batch_norm(tape, h, nn::constant(style_std_), nn::constant(style_mean_), nullptr,
                     nn::Mode::Train);
  for (const auto& [a, z] : body_) {
    Var r = nn::relu(tape, nn::conv2d(tape, h, a, 1, 1));
    h = nn::add(tape, h, nn::conv2d(tape, r, z, 1, 1));
  }
  h = nn::upsample_nearest(tape, h, mid.h, mid.w);
  h = nn::relu(tape, nn::conv2d(tape, h, dec1_, 1, 1));
  h = nn::upsample_nearest(tape, h, kernel_shape_.h, kernel_shape_.w);
  h = nn::conv2d(tape, h, dec2_, 1, 1);
  return nn::add(tape, kernel, h);
}

std::vector<Var> Stylizer::parameters() const {
  if (identity_) return {};
  std::vector<Var> out{enc1_, enc2_};
  for (const auto& [a, z] : body_) {
    out.push_back(a);
    out.push_back(z);
  }
  out.push_back(dec1_);
  out.push_back(dec2_);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Stylizer::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const Var& p : parameters()) out.emplace_back(p->name + ".weight", p->value);
  if (has_style()) {
    out.emplace_back("stylizer.style_mean", style_mean_);
    out.emplace_back("stylizer.style_std", style_std_);
  }
  return out;
}

}  // namespace framelog::train
