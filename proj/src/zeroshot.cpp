#include "framelog/zeroshot.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>

#include "framelog/error.hpp"

namespace framelog::zeroshot {
namespace {

using nn::Tensor;

constexpr int kChunk = 64;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void check_compatible(const Extractor& ex, const PrototypeSet& protos) {
  if (ex.point() != protos.point) {
    throw ValueError("prototypes were built at '" + arch::to_string(protos.point) +
                     "', extractor truncates at '" + arch::to_string(ex.point()) + "'");
  }
  if (ex.fingerprint() != protos.fingerprint) {
    throw ValueError("extractor fingerprint " + hex64(ex.fingerprint()) +
                     " does not match prototype fingerprint " + hex64(protos.fingerprint));
  }
}

}  // namespace

Extractor::Extractor(model::FeatureExtractor features, data::Normalizer norm)
    : features_(std::move(features)), norm_(std::move(norm)) {}

Extractor Extractor::from_classifier(train::Classifier clf, arch::TruncationPoint point) {
  auto net = std::make_shared<const model::ResNet>(std::move(clf.net));
  return Extractor(model::FeatureExtractor(std::move(net), point), std::move(clf.norm));
}

Tensor Extractor::extract(const Tensor& images) const {
  const Tensor x = norm_.apply(images);
  const int n = x.shape().n;
  Tensor out;
  for (int start = 0; start < n; start += kChunk) {
    const int count = std::min(kChunk, n - start);
    const Tensor part = features_.extract(x.slice_batch(start, count));
    if (start == 0) {
      nn::Shape s = part.shape();
      s.n = n;
      out = Tensor(s);
    }
    std::copy(part.values().begin(), part.values().end(), out.sample(start));
  }
  return out;
}

std::uint64_t Extractor::fingerprint() const {
  std::uint64_t h = features_.fingerprint();
  h = fnv1a64(norm_.mean.data(), norm_.mean.size() * sizeof(float), h);
  return fnv1a64(norm_.stddev.data(), norm_.stddev.size() * sizeof(float), h);
}

PrototypeSet prototypes_from_features(const Tensor& features, std::span<const int> labels,
                                      const std::vector<std::string>& classes) {
  const nn::Shape s = features.shape();
  if (static_cast<std::size_t>(s.n) != labels.size()) {
    throw ShapeError("prototypes: " + std::to_string(s.n) + " feature rows for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = classes.size();
  const std::size_t m = features.sample_size();
  std::vector<std::vector<double>> acc(k, std::vector<double>(m, 0.0));
  std::vector<int> counts(k, 0);
  for (int i = 0; i < s.n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValueError("label " + std::to_string(labels[i]) + " out of range");
    }
    const float* f = features.sample(i);
    auto& a = acc[labels[i]];
    for (std::size_t j = 0; j < m; ++j) a[j] += f[j];
    ++counts[labels[i]];
  }
  std::string empty;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) empty += (empty.empty() ? "" : ", ") + classes[c];
  }
  if (!empty.empty()) throw ValueError("no training frames for class(es): " + empty);

  PrototypeSet out;
  out.classes = classes;
  for (std::size_t c = 0; c < k; ++c) {
    ClassPrototype p;
    p.class_index = static_cast<int>(c);
    p.count = counts[c];
    p.mean = Tensor({1, s.c, s.h, s.w});
    for (std::size_t j = 0; j < m; ++j) p.mean[j] = static_cast<float>(acc[c][j] / counts[c]);
    out.prototypes.push_back(std::move(p));
  }
  return out;
}

PrototypeSet build_prototypes(const Extractor& extractor, const data::FrameTensors& train) {
  PrototypeSet out =
      prototypes_from_features(extractor.extract(train.images), train.labels, train.classes);
  out.point = extractor.point();
  out.fingerprint = extractor.fingerprint();
  return out;
}

Prediction nearest(const PrototypeSet& protos, std::span<const float> feature) {
  if (protos.prototypes.empty()) throw ValueError("empty prototype set");
  Prediction p;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < protos.prototypes.size(); ++c) {
    const Tensor& m = protos.prototypes[c].mean;
    if (m.size() != feature.size()) {
      throw ShapeError("feature has " + std::to_string(feature.size()) +
                       " elements, prototype " + m.shape().str());
    }
    double d = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) {
      const double diff = static_cast<double>(feature[j]) - m[j];
      d += diff * diff;
    }
    p.distances.push_back(d);
    if (d < best) {
      best = d;
      p.label = static_cast<int>(c);
    }
  }
  return p;
}

Prediction zs_predict(const Extractor& extractor, const PrototypeSet& protos, const Tensor& frame) {
  check_compatible(extractor, protos);
  if (frame.shape().n != 1) throw ShapeError("zs_predict takes one frame, got " + frame.shape().str());
  const Tensor f = extractor.extract(frame);
  return nearest(protos, {f.sample(0), f.sample_size()});
}

ZsEvaluation evaluate_features(const PrototypeSet& protos, const Tensor& features,
                               std::span<const int> labels) {
  const int n = features.shape().n;
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("features/labels mismatch");
  if (n == 0) throw ValueError("cannot evaluate an empty set");
  const std::size_t k = protos.prototypes.size();
  std::vector<int> hit(k, 0), seen(k, 0);
  ZsEvaluation ev;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const int pred = nearest(protos, {features.sample(i), features.sample_size()}).label;
    ev.predictions.push_back(pred);
    ++seen.at(labels[i]);
    if (pred == labels[i]) {
      ++hit[labels[i]];
      ++correct;
    }
  }
  ev.accuracy = static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < k; ++c) {
    ev.per_class.push_back(seen[c] ? static_cast<double>(hit[c]) / seen[c]
                                   : std::numeric_limits<double>::quiet_NaN());
  }
  return ev;
}

ZsEvaluation zs_evaluate(const Extractor& extractor, const PrototypeSet& protos,
                         const data::FrameTensors& test) {
  check_compatible(extractor, protos);
  if (test.classes != protos.classes) throw ValueError("test classes differ from prototype classes");
  return evaluate_features(protos, extractor.extract(test.images), test.labels);
}

std::string PrototypeSet::sidecar_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "prototypes";
  j["truncation"] = arch::to_string(point);
  j["fingerprint"] = hex64(fingerprint);
  j["classes"] = classes;
  std::vector<int> counts;
  for (const auto& p : prototypes) counts.push_back(p.count);
  j["counts"] = counts;
  return j.dump(2) + "\n";
}

Checkpoint PrototypeSet::to_checkpoint() const {
  Checkpoint ck;
  ck.metadata = sidecar_json();
  for (const auto& p : prototypes) ck.add("prototype." + std::to_string(p.class_index), p.mean);
  return ck;
}

PrototypeSet PrototypeSet::from_checkpoint(const Checkpoint& ck) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ck.metadata);
    PrototypeSet out;
    if (j.at("kind") != "prototypes") throw FormatError("not a prototype file");
    out.point = arch::parse_truncation_point(j.at("truncation").get<std::string>());
    out.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    out.classes = j.at("classes").get<std::vector<std::string>>();
    const auto counts = j.at("counts").get<std::vector<int>>();
    if (counts.size() != out.classes.size()) throw FormatError("counts/classes length mismatch");
    for (std::size_t c = 0; c < counts.size(); ++c) {
      out.prototypes.push_back(
          {static_cast<int>(c), ck.get("prototype." + std::to_string(c)), counts[c]});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("prototype metadata: ") + e.what());
  }
}

std::filesystem::path PrototypeSet::sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  return p.replace_extension(".json");
}

void PrototypeSet::save(const std::filesystem::path& path) const {
  if (sidecar_path(path) == path) throw ValueError("prototype file must not end in .json");
  to_checkpoint().save(path);
  write_file(sidecar_path(path), sidecar_json());
}

PrototypeSet PrototypeSet::load(const std::filesystem::path& path) {
  PrototypeSet out = from_checkpoint(Checkpoint::load(path));
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side) && read_file(side) != out.sidecar_json()) {
    throw FormatError("sidecar '" + side.string() + "' disagrees with '" + path.string() + "'");
  }
  return out;
}

}  // namespace framelog::zeroshot
