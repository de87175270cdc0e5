#include <doctest.h>

#include <memory>
#include <random>

#include "framelog/error.hpp"
#include "framelog/model.hpp"

using namespace framelog;
using namespace framelog::model;

namespace {

arch::ArchSpec small() {
  arch::ArchSpec s = arch::preset("mini");
  s.input_height = s.input_width = 16;
  s.num_classes = 4;
  return s;
}

Tensor noise(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor t(shape);
  for (float& v : t.values()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("forward produces logits of the expected shape") {
  ResNet net = ResNet::build(small(), 1);
  const Tensor y = net.infer(noise({3, 3, 16, 16}, 2));
  CHECK(y.shape() == nn::Shape{3, 4, 1, 1});
  CHECK(y.all_finite());
  CHECK_THROWS_AS(net.infer(noise({1, 1, 16, 16}, 2)), ShapeError);
}

TEST_CASE("build is a pure function of the seed") {
  const auto a = ResNet::build(small(), 7).state();
  const auto b = ResNet::build(small(), 7).state();
  const auto c = ResNet::build(small(), 8).state();
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("eval forward treats samples independently") {
  ResNet net = ResNet::build(small(), 3);
  const Tensor x = noise({4, 3, 16, 16}, 4);
  const Tensor all = net.infer(x);
  const Tensor one = net.infer(x.slice_batch(2, 1));
  for (int k = 0; k < 4; ++k) CHECK(one[k] == doctest::Approx(all.at(2, k, 0, 0)).epsilon(1e-5));
}

TEST_CASE("train forward updates running statistics; eval does not") {
  ResNet net = ResNet::build(small(), 3);
  const auto before = net.state();
  net.forward_eval(nn::constant(noise({2, 3, 16, 16}, 5)));
  CHECK(net.state() == before);
  nn::Tape tape;
  net.forward(&tape, nn::constant(noise({2, 3, 16, 16}, 5)), Mode::Train);
  CHECK_FALSE(net.state() == before);
}

TEST_CASE("clone is deep") {
  ResNet net = ResNet::build(small(), 3);
  ResNet copy = net.clone();
  CHECK(copy.state() == net.state());
  copy.parameters()[0]->value[0] += 1.0f;
  CHECK_FALSE(copy.state() == net.state());
}

TEST_CASE("load_state lists every mismatched tensor") {
  ResNet net = ResNet::build(small(), 3);
  auto state = net.state();
  state[0].second = Tensor({1, 1, 1, 1});
  state[3].second = Tensor({1, 1, 1, 1});
  try {
    net.load_state(state);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(state[0].first) != std::string::npos);
    CHECK(msg.find(state[3].first) != std::string::npos);
  }
  // nothing was partially applied
  CHECK(net.state() == ResNet::build(small(), 3).state());
}

TEST_CASE("reset_head only touches the classifier") {
  ResNet net = ResNet::build(small(), 3);
  const auto backbone = net.backbone_parameters();
  const Tensor stem = backbone[0]->value;
  net.reset_head(7, 11);
  CHECK(net.head_parameters()[0]->value.shape().n == 7);
  CHECK(net.parameters()[0]->value == stem);
  CHECK(net.infer(noise({1, 3, 16, 16}, 1)).shape().c == 7);
}

TEST_CASE("truncated extractor equals the full model's activation at that point") {
  auto net = std::make_shared<ResNet>(ResNet::build(small(), 9));
  const Tensor x = noise({2, 3, 16, 16}, 10);
  for (auto point : {arch::TruncationPoint::Stem, arch::TruncationPoint::AfterStage1,
                     arch::TruncationPoint::AfterStage2}) {
    Tensor tapped;
    ForwardOptions opts;
    opts.tap = [&](Stage s, const Tensor& t) {
      if (s == stage_of(point)) tapped = t;
    };
    net->forward_eval(nn::constant(x), opts);
    const FeatureExtractor ex = truncate(net, point);
    const Tensor f = ex.extract(x);
    CHECK(f == tapped);
    nn::Shape s = ex.output_shape(3, 16, 16);
    s.n = 2;
    CHECK(f.shape() == s);
  }
  CHECK(truncate(net, arch::TruncationPoint::Stem).conv_count() == 1);
  CHECK(truncate(net, arch::TruncationPoint::AfterStage1).conv_count() == 5);
}

TEST_CASE("full-size stem output") {
  // shape arithmetic only; nothing is allocated at this size
  auto net = std::make_shared<ResNet>(ResNet::build(arch::preset("mini"), 1));
  arch::ArchSpec big = arch::preset("baseline152");
  CHECK(nn::conv_out_extent(224, 7, 2, 3) == 112);
  CHECK(nn::conv_out_extent(112, big.stem.pool_kernel, big.stem.pool_stride, big.stem.pool_pad) == 56);
  CHECK(truncate(net, arch::TruncationPoint::AfterStage2).output_shape(3, 32, 32) ==
        nn::Shape{1, 64, 16, 16});
}

TEST_CASE("fingerprint follows the prefix weights only") {
  auto a = std::make_shared<ResNet>(ResNet::build(small(), 1));
  auto b = std::make_shared<ResNet>(a->clone());
  const auto point = arch::TruncationPoint::Stem;
  CHECK(truncate(a, point).fingerprint() == truncate(b, point).fingerprint());
  b->head_parameters()[0]->value[0] += 1.0f;
  CHECK(truncate(a, point).fingerprint() == truncate(b, point).fingerprint());
  b->stem_kernel()->value[0] += 1.0f;
  CHECK(truncate(a, point).fingerprint() != truncate(b, point).fingerprint());
}

TEST_CASE("stem kernel override must match") {
  ResNet net = ResNet::build(small(), 1);
  ForwardOptions opts;
  opts.stem_kernel = nn::constant(Tensor({16, 3, 5, 5}));
  CHECK_THROWS_AS(net.forward_eval(nn::constant(noise({1, 3, 16, 16}, 1)), opts), ShapeError);
  opts.stem_kernel = nn::constant(net.stem_kernel()->value);
  CHECK(net.forward_eval(nn::constant(noise({1, 3, 16, 16}, 1)), opts)->value ==
        net.infer(noise({1, 3, 16, 16}, 1)));
}
