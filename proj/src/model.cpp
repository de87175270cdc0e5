#include "framelog/model.hpp"

#include <cmath>
#include <random>
#include <type_traits>

#include "framelog/checkpoint.hpp"
#include "framelog/error.hpp"

namespace framelog::model {
namespace {

Tensor he_normal(nn::Shape shape, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(shape.c) * shape.h * shape.w;
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

bool name_in_prefix(const std::string& name, int stages) {
  if (name.starts_with("stem.")) return true;
  for (int s = 1; s <= stages; ++s) {
    if (name.starts_with("layer" + std::to_string(s) + ".")) return true;
  }
  return false;
}

}  // namespace

Stage stage_of(arch::TruncationPoint p) {
  return static_cast<Stage>(arch::stages_before(p));
}

ResNet ResNet::build(const arch::ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  ResNet net;
  net.spec_ = spec;
  std::mt19937_64 rng(seed);

  auto make = [&](const arch::ConvLayout& c, const std::string& bn_name) {
    ConvBn layer;
    layer.name = c.name;
    layer.bn_name = bn_name;
    layer.kernel = nn::parameter(
        he_normal({c.out_channels, c.in_channels, c.kernel, c.kernel}, rng), c.name + ".weight");
    layer.gamma = nn::parameter(Tensor({1, c.out_channels, 1, 1}, 1.0f), bn_name + ".weight");
    layer.beta = nn::parameter(Tensor({1, c.out_channels, 1, 1}, 0.0f), bn_name + ".bias");
    layer.stats = nn::RunningStats::identity(c.out_channels);
    layer.stride = c.stride;
    layer.pad = c.pad;
    return layer;
  };

  const auto layout = arch::conv_layout(spec);
  std::size_t next = 0;
  net.stem_ = make(layout[next++], "stem.bn");
  net.stages_.resize(4);
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < spec.depths[s]; ++b) {
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      Block block{make(layout[next], prefix + ".bn1"), make(layout[next + 1], prefix + ".bn2"),
                  make(layout[next + 2], prefix + ".bn3"), std::nullopt};
      next += 3;
      if (next < layout.size() && layout[next].name == prefix + ".downsample.conv") {
        block.downsample = make(layout[next++], prefix + ".downsample.bn");
      }
      net.stages_[s].push_back(std::move(block));
    }
  }
  net.reset_head(spec.num_classes, seed ^ 0x9e3779b97f4a7c15ull);
  return net;
}

void ResNet::reset_head(int num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ValueError("reset_head: num_classes must be >= 1");
  spec_.num_classes = num_classes;
  const int features = spec_.feature_width();
  std::mt19937_64 rng(seed);
  const float bound = 1.0f / std::sqrt(static_cast<float>(features));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor w({num_classes, features, 1, 1});
  for (float& v : w.values()) v = dist(rng);
  fc_weight_ = nn::parameter(std::move(w), "fc.weight");
  fc_bias_ = nn::parameter(Tensor({1, num_classes, 1, 1}, 0.0f), "fc.bias");
}

ResNet ResNet::clone() const {
  ResNet out;
  out.spec_ = spec_;
  auto copy_var = [](const Var& v) { return nn::parameter(v->value, v->name); };
  auto copy_layer = [&](const ConvBn& l) {
    ConvBn c = l;
    c.kernel = copy_var(l.kernel);
    c.gamma = copy_var(l.gamma);
    c.beta = copy_var(l.beta);
    return c;
  };
  out.stem_ = copy_layer(stem_);
  out.stages_.resize(stages_.size());
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const Block& b : stages_[s]) {
      Block nb{copy_layer(b.conv1), copy_layer(b.conv2), copy_layer(b.conv3), std::nullopt};
      if (b.downsample) nb.downsample = copy_layer(*b.downsample);
      out.stages_[s].push_back(std::move(nb));
    }
  }
  out.fc_weight_ = copy_var(fc_weight_);
  out.fc_bias_ = copy_var(fc_bias_);
  return out;
}

std::vector<const ResNet::ConvBn*> ResNet::layers() const {
  std::vector<const ConvBn*> out{&stem_};
  for (const auto& stage : stages_) {
    for (const Block& b : stage) {
      out.push_back(&b.conv1);
      out.push_back(&b.conv2);
      out.push_back(&b.conv3);
      if (b.downsample) out.push_back(&*b.downsample);
    }
  }
  return out;
}

std::vector<ResNet::ConvBn*> ResNet::layers() {
  std::vector<ConvBn*> out;
  for (const ConvBn* l : std::as_const(*this).layers()) out.push_back(const_cast<ConvBn*>(l));
  return out;
}

std::vector<Var> ResNet::backbone_parameters() const {
  std::vector<Var> out;
  for (const ConvBn* l : layers()) {
    out.push_back(l->kernel);
    out.push_back(l->gamma);
    out.push_back(l->beta);
  }
  return out;
}

std::vector<Var> ResNet::head_parameters() const { return {fc_weight_, fc_bias_}; }

std::vector<Var> ResNet::parameters() const {
  auto out = backbone_parameters();
  out.push_back(fc_weight_);
  out.push_back(fc_bias_);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ResNet::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const ConvBn* l : layers()) {
    out.emplace_back(l->kernel->name, l->kernel->value);
    out.emplace_back(l->gamma->name, l->gamma->value);
    out.emplace_back(l->beta->name, l->beta->value);
    out.emplace_back(l->bn_name + ".running_mean", l->stats.mean);
    out.emplace_back(l->bn_name + ".running_var", l->stats.var);
  }
  out.emplace_back(fc_weight_->name, fc_weight_->value);
  out.emplace_back(fc_bias_->name, fc_bias_->value);
  return out;
}

void ResNet::load_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::vector<std::pair<std::string, Tensor*>> targets;
  for (ConvBn* l : layers()) {
    targets.emplace_back(l->kernel->name, &l->kernel->value);
    targets.emplace_back(l->gamma->name, &l->gamma->value);
    targets.emplace_back(l->beta->name, &l->beta->value);
    targets.emplace_back(l->bn_name + ".running_mean", &l->stats.mean);
    targets.emplace_back(l->bn_name + ".running_var", &l->stats.var);
  }
  targets.emplace_back(fc_weight_->name, &fc_weight_->value);
  targets.emplace_back(fc_bias_->name, &fc_bias_->value);

  std::string mismatches;
  std::vector<std::pair<Tensor*, const Tensor*>> assign;
  for (const auto& [name, t] : tensors) {
    for (auto& [tname, dst] : targets) {
      if (tname != name) continue;
      if (dst->shape() != t.shape()) {
        mismatches += (mismatches.empty() ? "" : "; ") + name + " expects " +
                      dst->shape().str() + " got " + t.shape().str();
      } else {
        assign.emplace_back(dst, &t);
      }
    }
  }
  if (!mismatches.empty()) throw ShapeError("tensor shape mismatch: " + mismatches);
  for (auto& [dst, src] : assign) *dst = *src;
}

template <class Self>
Var ResNet::conv_bn(Self& /*self*/, const ConvBn& layer, nn::RunningStats* stats, Tape* tape,
                    const Var& x, Mode mode, const Var& kernel_override) {
  const Var& kernel = kernel_override ? kernel_override : layer.kernel;
  if (kernel->value.shape() != layer.kernel->value.shape()) {
    throw ShapeError("kernel override " + kernel->value.shape().str() + " does not match " +
                     layer.name + " kernel " + layer.kernel->value.shape().str());
  }
  Var y = nn::conv2d(tape, x, kernel, layer.stride, layer.pad);
  if (mode == Mode::Train) return nn::batch_norm(tape, y, layer.gamma, layer.beta, stats, mode);
  return nn::batch_norm_eval(tape, y, layer.gamma, layer.beta, layer.stats);
}

template <class Self>
Var ResNet::run(Self& self, Tape* tape, const Var& x, Mode mode, const ForwardOptions& opts) {
  constexpr bool kMutable = !std::is_const_v<Self>;
  if constexpr (!kMutable) {
    if (mode == Mode::Train) throw ValueError("train-mode forward needs a mutable network");
  }
  const nn::Shape xs = x->value.shape();
  if (xs.c != self.spec_.input_channels) {
    throw ShapeError("network expects " + std::to_string(self.spec_.input_channels) +
                     " input channels, got input " + xs.str());
  }
  require_finite(x->value, "network input");
  auto stats = [&](auto& layer) -> nn::RunningStats* {
    if constexpr (kMutable) {
      return mode == Mode::Train ? &layer.stats : nullptr;
    } else {
      return nullptr;
    }
  };
  auto emit = [&](Stage s, const Var& v) {
    if (opts.tap) opts.tap(s, v->value);
    return opts.stop == s;
  };

  Var h = nn::relu(tape, conv_bn(self, self.stem_, stats(self.stem_), tape, x, mode,
                                 opts.stem_kernel));
  const auto& stem = self.spec_.stem;
  if (stem.maxpool) h = nn::max_pool(tape, h, stem.pool_kernel, stem.pool_stride, stem.pool_pad);
  if (emit(Stage::Stem, h)) return h;

  for (std::size_t s = 0; s < self.stages_.size(); ++s) {
    for (auto& block : self.stages_[s]) {
      Var a = nn::relu(tape, conv_bn(self, block.conv1, stats(block.conv1), tape, h, mode, {}));
      a = nn::relu(tape, conv_bn(self, block.conv2, stats(block.conv2), tape, a, mode, {}));
      a = conv_bn(self, block.conv3, stats(block.conv3), tape, a, mode, {});
      Var shortcut = h;
      if (block.downsample) {
        shortcut = conv_bn(self, *block.downsample, stats(*block.downsample), tape, h, mode, {});
      }
      h = nn::relu(tape, nn::add(tape, a, shortcut));
    }
    if (emit(static_cast<Stage>(s + 1), h)) return h;
  }
  Var pooled = nn::global_avg_pool(tape, h);
  Var logits = nn::linear(tape, pooled, self.fc_weight_, self.fc_bias_);
  emit(Stage::Head, logits);
  return logits;
}

Var ResNet::forward(Tape* tape, const Var& x, Mode mode, const ForwardOptions& opts) {
  return run(*this, tape, x, mode, opts);
}

Var ResNet::forward_eval(const Var& x, const ForwardOptions& opts) const {
  return run(*this, nullptr, x, Mode::Eval, opts);
}

Tensor ResNet::infer(const Tensor& x) const { return forward_eval(nn::constant(x))->value; }

int ResNet::conv_count(Stage stop) const {
  int n = 1;
  const int stages = std::min(static_cast<int>(stop), 4);
  for (int s = 0; s < stages; ++s) {
    for (const Block& b : stages_[s]) n += b.downsample ? 4 : 3;
  }
  return n;
}

FeatureExtractor::FeatureExtractor(std::shared_ptr<const ResNet> net, arch::TruncationPoint point)
    : net_(std::move(net)), point_(point) {
  if (!net_) throw ValueError("feature extractor needs a network");
}

Tensor FeatureExtractor::extract(const Tensor& x) const {
  ForwardOptions opts;
  opts.stop = stage_of(point_);
  return net_->forward_eval(nn::constant(x), opts)->value;
}

int FeatureExtractor::conv_count() const { return net_->conv_count(stage_of(point_)); }

std::uint64_t FeatureExtractor::fingerprint() const {
  std::uint64_t h = fnv1a64(nullptr, 0);
  const int stages = arch::stages_before(point_);
  for (const auto& [name, t] : net_->state()) {
    if (!name_in_prefix(name, stages)) continue;
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.data(), t.size() * sizeof(float), h);
  }
  return h;
}

nn::Shape FeatureExtractor::output_shape(int channels, int height, int width) const {
  const auto& spec = net_->spec();
  if (channels != spec.input_channels) throw ShapeError("extractor input channel mismatch");
  int h = nn::conv_out_extent(height, spec.stem.kernel, spec.stem.stride, spec.stem.kernel / 2);
  int w = nn::conv_out_extent(width, spec.stem.kernel, spec.stem.stride, spec.stem.kernel / 2);
  if (spec.stem.maxpool) {
    h = nn::conv_out_extent(h, spec.stem.pool_kernel, spec.stem.pool_stride, spec.stem.pool_pad);
    w = nn::conv_out_extent(w, spec.stem.pool_kernel, spec.stem.pool_stride, spec.stem.pool_pad);
  }
  int c = spec.stem.out_channels;
  for (int s = 0; s < arch::stages_before(point_); ++s) {
    h = nn::conv_out_extent(h, 3, arch::ArchSpec::stage_stride(s), 1);
    w = nn::conv_out_extent(w, 3, arch::ArchSpec::stage_stride(s), 1);
    c = spec.out_width(s);
  }
  return {1, c, h, w};
}

FeatureExtractor truncate(std::shared_ptr<const ResNet> net, arch::TruncationPoint point) {
  return FeatureExtractor(std::move(net), point);
}

}  // namespace framelog::model
