#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "framelog/adam.hpp"
#include "framelog/arch.hpp"
#include "framelog/checkpoint.hpp"
#include "framelog/dataset.hpp"
#include "framelog/model.hpp"
#include "framelog/stylizer.hpp"

namespace framelog::train {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_acc = 0, test_loss = 0, test_acc = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  double threshold = 0.95;  // train accuracy counted as converged
  int patience = 2;         // consecutive epochs at or above threshold
  bool freeze_backbone = false;
  /// Called after every epoch (progress reporting); not part of the result.
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct Curves {
  std::vector<EpochRecord> records;

  /// `epoch,train_loss,train_acc,test_loss,test_acc` with a header row.
  std::string csv() const;
  static Curves parse_csv(const std::string& text);
  std::vector<double> train_acc() const;

  friend bool operator==(const Curves&, const Curves&) = default;
};

/// First 1-based epoch whose train accuracy, and that of the following
/// patience-1 epochs, is >= threshold.
std::optional<int> detect_convergence(std::span<const double> train_acc, double threshold,
                                      int patience);
std::optional<int> detect_convergence(const Curves& curves, double threshold, int patience);

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
};

/// Argmax with ties going to the lowest index.
int argmax(std::span<const float> row);
/// Scores logits (N, K, 1, 1) against labels.
Evaluation evaluate_logits(const nn::Tensor& logits, std::span<const int> labels);

/// A trained network plus what is needed to feed it raw frames.
struct Classifier {
  model::ResNet net;
  data::Normalizer norm;
  std::vector<std::string> classes;

  /// Raw [0, 1] images (N, 3, H, W) to logits, evaluated in chunks.
  nn::Tensor logits(const nn::Tensor& images) const;

  /// Model state plus "norm.mean"/"norm.std"; metadata holds the arch config
  /// and class names as JSON.
  Checkpoint to_checkpoint() const;
  static Classifier from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const { to_checkpoint().save(path); }
  static Classifier load(const std::filesystem::path& path);
};

/// Eval-mode metrics. Throws ValueError when the classes differ.
Evaluation evaluate(const Classifier& clf, const data::FrameTensors& set);

struct TrainResult {
  Classifier classifier;
  Curves curves;
  std::optional<int> converged_epoch;
  /// Extra tensors saved next to the classifier (stylizer state).
  std::vector<std::pair<std::string, nn::Tensor>> extras;

  Checkpoint checkpoint() const;
};

TrainResult train_standard(const arch::ArchSpec& spec, const data::FrameTensors& train,
                           const data::FrameTensors& test, const TrainConfig& cfg);

/// Copies every backbone tensor of `teacher` into a freshly built network
/// with a new `num_classes` head. Throws ShapeError listing each backbone
/// tensor that is missing or shaped differently.
model::ResNet transfer_init(const Checkpoint& teacher, const arch::ArchSpec& spec,
                            int num_classes, std::uint64_t seed);

TrainResult train_transfer(const Checkpoint& teacher, const arch::ArchSpec& spec,
                           const data::FrameTensors& train, const data::FrameTensors& test,
                           const TrainConfig& cfg);

struct KnstOptions {
  StylizerSpec stylizer;
  /// Raw [0, 1] style image (1, 3, H, W).
  nn::Tensor style_image;
  /// Replace the stylizer by the identity map (trajectory equals standard).
  bool identity = false;
};

/// Seed the live stylizer is built from for a run seeded with `seed`.
std::uint64_t stylizer_seed(std::uint64_t seed);

TrainResult train_knst(const arch::ArchSpec& spec, const data::FrameTensors& train,
                       const data::FrameTensors& test, const TrainConfig& cfg,
                       const KnstOptions& knst);

}  // namespace framelog::train
