#include <doctest.h>

#include <filesystem>
#include <memory>
#include <random>

#include "framelog/error.hpp"
#include "framelog/synth.hpp"
#include "framelog/zeroshot.hpp"

using namespace framelog;
using namespace framelog::zeroshot;
using nn::Tensor;

namespace {

PrototypeSet constant_protos(int elems, std::vector<float> levels) {
  PrototypeSet p;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    p.classes.push_back("c" + std::to_string(k));
    p.prototypes.push_back({static_cast<int>(k), Tensor({1, elems, 1, 1}, levels[k]), 1});
  }
  return p;
}

Extractor make_extractor(std::uint64_t seed) {
  arch::ArchSpec s = arch::preset("mini");
  s.input_height = s.input_width = 16;
  s.num_classes = 3;
  train::Classifier clf{model::ResNet::build(s, seed), data::Normalizer::identity(3), {"a", "b", "c"}};
  return Extractor::from_classifier(std::move(clf), arch::TruncationPoint::Stem);
}

data::FrameTensors frames(int classes, int clips) {
  data::SynthConfig c;
  c.classes = classes;
  c.clips_per_class = clips;
  c.frames_per_clip = 1;
  c.height = c.width = 16;
  return data::synth_tensors(c);
}

}  // namespace

TEST_CASE("closed-form distances: 0.4 is nearer to 0 than to 1") {
  const int m = 24;
  const PrototypeSet p = constant_protos(m, {0.0f, 1.0f});
  const std::vector<float> f(m, 0.4f);
  const Prediction pr = nearest(p, f);
  CHECK(pr.label == 0);
  CHECK(pr.distances[0] == doctest::Approx(0.16 * m));
  CHECK(pr.distances[1] == doctest::Approx(0.36 * m));
}

TEST_CASE("ties go to the lowest index") {
  const PrototypeSet p = constant_protos(4, {1.0f, 0.0f, 2.0f});
  const std::vector<float> f(4, 1.0f);  // distance 4 to classes 1 and 2, 0 to class 0
  CHECK(nearest(p, f).label == 0);
  const std::vector<float> mid(4, 1.5f);  // classes 0 and 2 equidistant
  CHECK(nearest(p, mid).label == 0);
  const PrototypeSet q = constant_protos(4, {0.0f, 2.0f, 2.0f});
  const std::vector<float> two(4, 2.0f);
  CHECK(nearest(q, two).label == 1);
  const std::vector<float> wrong(3, 0.0f);
  CHECK_THROWS_AS(nearest(q, wrong), ShapeError);
}

TEST_CASE("argmin is invariant to a shared offset of prototypes and feature") {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  for (int trial = 0; trial < 20; ++trial) {
    PrototypeSet p = constant_protos(6, {0, 0, 0, 0});
    for (auto& c : p.prototypes)
      for (float& v : c.mean.values()) v = d(rng);
    std::vector<float> f(6);
    for (float& v : f) v = d(rng);
    const int before = nearest(p, f).label;
    for (auto& c : p.prototypes)
      for (int i = 0; i < 6; ++i) c.mean[i] += static_cast<float>(i) * 0.5f;
    for (int i = 0; i < 6; ++i) f[i] += static_cast<float>(i) * 0.5f;
    CHECK(nearest(p, f).label == before);
  }
}

TEST_CASE("class means agree with element-wise summation") {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> d(3.0f, 2.0f);
  Tensor feats({9, 2, 3, 3});
  for (float& v : feats.values()) v = d(rng);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 0, 1};
  const PrototypeSet p = prototypes_from_features(feats, labels, {"a", "b", "c"});
  for (int k = 0; k < 3; ++k) {
    int count = 0;
    for (int l : labels) count += l == k;
    CHECK(p.prototypes[k].count == count);
    for (std::size_t e = 0; e < feats.sample_size(); ++e) {
      double s = 0;
      for (int i = 0; i < 9; ++i)
        if (labels[i] == k) s += feats.sample(i)[e];
      CHECK(p.prototypes[k].mean[e] == doctest::Approx(s / count).epsilon(1e-5));
    }
  }
  // duplicating a sample does not move a single-sample mean
  const std::vector<int> one{0, 1, 1};
  Tensor three({3, 2, 3, 3});
  for (float& v : three.values()) v = d(rng);
  std::copy(three.sample(1), three.sample(1) + 18, three.sample(2));
  const PrototypeSet q = prototypes_from_features(three, one, {"a", "b"});
  for (int e = 0; e < 18; ++e) CHECK(q.prototypes[1].mean[e] == three.sample(1)[e]);
  const std::vector<int> missing{0, 0, 0};
  CHECK_THROWS_AS(prototypes_from_features(three, missing, {"a", "b"}), ValueError);
}

TEST_CASE("a frame that is its class's only exemplar is classified at distance 0") {
  const Extractor ex = make_extractor(1);
  const auto set = frames(3, 1);
  const PrototypeSet p = build_prototypes(ex, set);
  for (int i = 0; i < 3; ++i) {
    const Prediction pr = zs_predict(ex, p, set.images.slice_batch(i, 1));
    CHECK(pr.label == i);
    CHECK(pr.distances[i] == 0.0);
  }
  CHECK(zs_evaluate(ex, p, set).accuracy == 1.0);
}

TEST_CASE("single-class data is always right") {
  const Extractor ex = make_extractor(1);
  auto set = frames(1, 3);
  const PrototypeSet p = build_prototypes(ex, set);
  const ZsEvaluation e = zs_evaluate(ex, p, set);
  CHECK(e.accuracy == 1.0);
  CHECK(e.per_class.size() == 1);
}

TEST_CASE("prototypes refuse a different extractor") {
  const Extractor a = make_extractor(1);
  const Extractor b = make_extractor(2);
  const auto set = frames(3, 1);
  const PrototypeSet p = build_prototypes(a, set);
  CHECK(p.fingerprint == a.fingerprint());
  CHECK_THROWS_AS(zs_predict(b, p, set.images.slice_batch(0, 1)), ValueError);
  CHECK_THROWS_AS(zs_predict(a, p, set.images.slice_batch(0, 2)), ShapeError);
}

TEST_CASE("save and load with sidecar") {
  const Extractor ex = make_extractor(1);
  const PrototypeSet p = build_prototypes(ex, frames(3, 2));
  const auto dir = std::filesystem::temp_directory_path() / "framelog_protos";
  std::filesystem::create_directories(dir);
  const auto path = dir / "p.flog";
  p.save(path);
  CHECK(std::filesystem::exists(dir / "p.json"));
  const PrototypeSet back = PrototypeSet::load(path);
  CHECK(back.classes == p.classes);
  CHECK(back.fingerprint == p.fingerprint);
  CHECK(back.point == p.point);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.prototypes[k].mean == p.prototypes[k].mean);
    CHECK(back.prototypes[k].count == 2);
  }
  write_file(dir / "p.json", R"({"kind":"prototypes","classes":["x"]})");
  CHECK_THROWS_AS(PrototypeSet::load(path), FormatError);
  std::filesystem::remove_all(dir);
}
