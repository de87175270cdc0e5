#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framelog/arch.hpp"
#include "framelog/tensor.hpp"
#include "framelog/training.hpp"
#include "framelog/zeroshot.hpp"

namespace framelog::bench {

/// Seconds from an arbitrary origin; must be monotonic.
using Clock = std::function<double()>;
double monotonic_seconds();

/// Runs one batch and returns a predicted class per frame (may be empty).
using ForwardFn = std::function<std::vector<int>(const nn::Tensor& batch)>;

struct BenchOptions {
  int batch = 16;
  int repetitions = 1;
  int warmup = 1;
  int threads = 1;            // >1 splits each batch across threads
  std::string scope = "all";  // which frames were fed: "all" or "test"
  Clock clock;                // defaults to monotonic_seconds
};

struct BenchReport {
  std::string model;
  std::int64_t frames = 0;  // timed frames, summed over repetitions
  double total_s = 0;
  double per_frame_mean_s = 0;
  double per_frame_p50_s = 0;
  double per_frame_p95_s = 0;
  int batch = 0;
  int repetitions = 0;
  int threads = 1;
  std::string scope;
  std::optional<double> accuracy;
  std::int64_t conv_params = 0;
  std::int64_t total_params = 0;
  std::int64_t memory_bytes = 0;
  std::string note;

  std::string json() const;
};

/// Times `fn` over `frames` in batches. Warmup passes are not timed.
/// Accuracy is filled from the last repetition when `labels` is non-empty.
BenchReport bench_forward(const ForwardFn& fn, const nn::Tensor& frames,
                          std::span<const int> labels, const BenchOptions& opts);

/// Nearest-rank percentile of `values` (q in (0, 1]).
double percentile(std::vector<double> values, double q);

/// Forward functions and static columns for the two kinds of models.
ForwardFn classifier_forward(const train::Classifier& clf);
ForwardFn prototype_forward(const zeroshot::Extractor& ex, const zeroshot::PrototypeSet& protos);
void fill_static(BenchReport& r, const arch::ArchSpec& spec, int batch);
void fill_static(BenchReport& r, const arch::ArchSpec& spec, arch::TruncationPoint point,
                 int batch);

struct ComparisonTable {
  std::string csv;
  std::string text;
};

/// Rows in the given order. Throws ValueError for fewer than two reports.
ComparisonTable compare_report(std::span<const BenchReport> reports);

}  // namespace framelog::bench
