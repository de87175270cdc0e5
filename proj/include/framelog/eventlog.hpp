#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "framelog/tensor.hpp"
#include "framelog/training.hpp"

namespace framelog::eventlog {

struct EventRecord {
  int frame_index = 0;
  double timestamp_s = 0;
  std::optional<std::string> event;  // null below the threshold
  double confidence = 0;             // max softmax probability

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct EventSpan {
  std::string event;
  double start_s = 0;
  double end_s = 0;
  int frame_count = 0;

  friend bool operator==(const EventSpan&, const EventSpan&) = default;
};

/// (frame index, event) of each non-null record.
struct FrameEvent {
  int frame_index = 0;
  std::string event;

  friend bool operator==(const FrameEvent&, const FrameEvent&) = default;
};

/// Records from class probabilities (N, K, 1, 1) of consecutive frames.
std::vector<EventRecord> records_from_probs(const nn::Tensor& probs,
                                            const std::vector<std::string>& classes, int fps,
                                            double threshold, int first_index = 0);

/// One record per frame of `frames` (raw [0, 1] pixels, in order).
std::vector<EventRecord> extract_log(const train::Classifier& clf, const nn::Tensor& frames,
                                     int fps, double threshold);
/// Reads each PPM in order; a decoding failure names the frame index.
std::vector<EventRecord> extract_log(const train::Classifier& clf,
                                     std::span<const std::filesystem::path> frames, int fps,
                                     double threshold);

/// Merges maximal runs of consecutive frames with the same non-null event.
std::vector<EventSpan> collapse(std::span<const EventRecord> records, int fps);
/// Inverse of `collapse` on the non-null records.
std::vector<FrameEvent> expand(std::span<const EventSpan> spans, int fps);
std::vector<FrameEvent> non_null(std::span<const EventRecord> records);

std::string to_jsonl(std::span<const EventRecord> records);
std::string to_jsonl(std::span<const EventSpan> spans);
std::vector<EventRecord> parse_records(const std::string& jsonl);
std::vector<EventSpan> parse_spans(const std::string& jsonl);

}  // namespace framelog::eventlog
