#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "framelog/arch.hpp"
#include "framelog/checkpoint.hpp"
#include "framelog/dataset.hpp"
#include "framelog/model.hpp"
#include "framelog/training.hpp"

namespace framelog::zeroshot {

/// Truncated backbone plus the input normalization it was trained with.
class Extractor {
 public:
  Extractor(model::FeatureExtractor features, data::Normalizer norm);
  static Extractor from_classifier(train::Classifier clf, arch::TruncationPoint point);

  /// Raw [0, 1] images (N, 3, H, W) to raw post-truncation activations.
  nn::Tensor extract(const nn::Tensor& images) const;
  arch::TruncationPoint point() const { return features_.point(); }
  const model::FeatureExtractor& features() const { return features_; }
  /// Hash of every weight the prefix reads and of the normalizer.
  std::uint64_t fingerprint() const;

 private:
  model::FeatureExtractor features_;
  data::Normalizer norm_;
};

struct ClassPrototype {
  int class_index = 0;
  nn::Tensor mean;  // (1, C, N, N)
  int count = 0;
};

struct PrototypeSet {
  arch::TruncationPoint point = arch::TruncationPoint::Stem;
  std::vector<std::string> classes;
  std::vector<ClassPrototype> prototypes;  // one per class, by class index
  std::uint64_t fingerprint = 0;

  std::string sidecar_json() const;
  Checkpoint to_checkpoint() const;
  static PrototypeSet from_checkpoint(const Checkpoint& ck);
  /// Writes `path` (tensor file) and `path` with extension ".json".
  void save(const std::filesystem::path& path) const;
  static PrototypeSet load(const std::filesystem::path& path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);
};

/// Class means of the extractor's features over `train`. Throws ValueError
/// naming any class without frames.
PrototypeSet build_prototypes(const Extractor& extractor, const data::FrameTensors& train);

/// Mean over samples of `features` (N, C, H, W) grouped by label.
PrototypeSet prototypes_from_features(const nn::Tensor& features, std::span<const int> labels,
                                      const std::vector<std::string>& classes);

struct Prediction {
  int label = 0;
  std::vector<double> distances;  // squared Euclidean, per class
};

/// Argmin of squared distance to each prototype; ties go to the lowest index.
Prediction nearest(const PrototypeSet& protos, std::span<const float> feature);

/// Classifies one raw frame (1, 3, H, W). Throws ValueError when the set was
/// built from a different extractor.
Prediction zs_predict(const Extractor& extractor, const PrototypeSet& protos,
                      const nn::Tensor& frame);

struct ZsEvaluation {
  double accuracy = 0;
  std::vector<double> per_class;  // NaN for classes absent from the set
  std::vector<int> predictions;
};

ZsEvaluation zs_evaluate(const Extractor& extractor, const PrototypeSet& protos,
                         const data::FrameTensors& test);
ZsEvaluation evaluate_features(const PrototypeSet& protos, const nn::Tensor& features,
                               std::span<const int> labels);

}  // namespace framelog::zeroshot
