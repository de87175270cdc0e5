#include "framelog/eventlog.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "framelog/dataset.hpp"
#include "framelog/error.hpp"
#include "framelog/image.hpp"
#include "framelog/ops.hpp"

namespace framelog::eventlog {
namespace {

using json = nlohmann::ordered_json;

constexpr int kChunk = 64;

void check_args(int fps, double threshold) {
  if (fps < 1) throw ValueError("fps must be positive, got " + std::to_string(fps));
  if (!(threshold >= 0.0)) throw ValueError("threshold must be >= 0");
}

// Frame index at time t, robust to the rounding of index / fps.
int frame_at(double t, int fps) { return static_cast<int>(std::lround(t * fps)); }

template <class F>
void each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("event log line " + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<EventRecord> records_from_probs(const nn::Tensor& probs,
                                            const std::vector<std::string>& classes, int fps,
                                            double threshold, int first_index) {
  check_args(fps, threshold);
  const nn::Shape s = probs.shape();
  if (static_cast<std::size_t>(s.c) != classes.size() || s.h != 1 || s.w != 1) {
    throw ShapeError("probabilities " + s.str() + " do not match " +
                     std::to_string(classes.size()) + " classes");
  }
  std::vector<EventRecord> out;
  for (int i = 0; i < s.n; ++i) {
    const std::span<const float> row(probs.sample(i), s.c);
    const int k = train::argmax(row);
    EventRecord r;
    r.frame_index = first_index + i;
    r.timestamp_s = static_cast<double>(r.frame_index) / fps;
    r.confidence = row[k];
    if (r.confidence >= threshold) r.event = classes[k];
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

nn::Tensor probabilities(const nn::Tensor& logits) {
  nn::Tensor p(logits.shape());
  const int k = logits.shape().c;
  for (int i = 0; i < logits.shape().n; ++i) {
    const auto row = nn::softmax({logits.sample(i), static_cast<std::size_t>(k)});
    std::copy(row.begin(), row.end(), p.sample(i));
  }
  return p;
}

}  // namespace

std::vector<EventRecord> extract_log(const train::Classifier& clf, const nn::Tensor& frames,
                                     int fps, double threshold) {
  check_args(fps, threshold);
  if (frames.empty() || frames.shape().n == 0) throw ValueError("no frames to label");
  return records_from_probs(probabilities(clf.logits(frames)), clf.classes, fps, threshold);
}

std::vector<EventRecord> extract_log(const train::Classifier& clf,
                                     std::span<const std::filesystem::path> frames, int fps,
                                     double threshold) {
  check_args(fps, threshold);
  if (frames.empty()) throw ValueError("no frames to label");
  std::vector<EventRecord> out;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const std::size_t count = std::min<std::size_t>(kChunk, frames.size() - start);
    std::vector<nn::Tensor> batch;
    for (std::size_t i = start; i < start + count; ++i) {
      try {
        batch.push_back(data::image_to_tensor(data::read_ppm(frames[i])));
      } catch (const Error& e) {
        throw IoError("frame " + std::to_string(i) + ": " + e.what());
      }
      if (!(batch.back().shape() == batch.front().shape())) {
        throw ShapeError("frame " + std::to_string(i) + " is " + batch.back().shape().str() +
                         ", expected " + batch.front().shape().str());
      }
    }
    const auto probs = probabilities(clf.logits(nn::stack(batch)));
    auto part = records_from_probs(probs, clf.classes, fps, threshold, static_cast<int>(start));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<EventSpan> collapse(std::span<const EventRecord> records, int fps) {
  if (fps < 1) throw ValueError("fps must be positive");
  std::vector<EventSpan> out;
  int last = -2;
  for (const auto& r : records) {
    if (!r.event) {
      last = -2;
      continue;
    }
    if (!out.empty() && last == r.frame_index - 1 && out.back().event == *r.event) {
      ++out.back().frame_count;
      out.back().end_s = static_cast<double>(r.frame_index + 1) / fps;
    } else {
      out.push_back({*r.event, static_cast<double>(r.frame_index) / fps,
                     static_cast<double>(r.frame_index + 1) / fps, 1});
    }
    last = r.frame_index;
  }
  return out;
}

std::vector<FrameEvent> expand(std::span<const EventSpan> spans, int fps) {
  if (fps < 1) throw ValueError("fps must be positive");
  std::vector<FrameEvent> out;
  for (const auto& s : spans) {
    const int first = frame_at(s.start_s, fps);
    for (int i = 0; i < s.frame_count; ++i) out.push_back({first + i, s.event});
  }
  return out;
}

std::vector<FrameEvent> non_null(std::span<const EventRecord> records) {
  std::vector<FrameEvent> out;
  for (const auto& r : records) {
    if (r.event) out.push_back({r.frame_index, *r.event});
  }
  return out;
}

std::string to_jsonl(std::span<const EventRecord> records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["frame_index"] = r.frame_index;
    j["timestamp_s"] = r.timestamp_s;
    j["event"] = r.event ? json(*r.event) : json(nullptr);
    j["confidence"] = r.confidence;
    out += j.dump() + "\n";
  }
  return out;
}

std::string to_jsonl(std::span<const EventSpan> spans) {
  std::string out;
  for (const auto& s : spans) {
    json j;
    j["event"] = s.event;
    j["start_s"] = s.start_s;
    j["end_s"] = s.end_s;
    j["frame_count"] = s.frame_count;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<EventRecord> parse_records(const std::string& jsonl) {
  std::vector<EventRecord> out;
  each_line(jsonl, [&](const json& j) {
    EventRecord r;
    r.frame_index = j.at("frame_index").get<int>();
    r.timestamp_s = j.at("timestamp_s").get<double>();
    if (!j.at("event").is_null()) r.event = j.at("event").get<std::string>();
    r.confidence = j.at("confidence").get<double>();
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<EventSpan> parse_spans(const std::string& jsonl) {
  std::vector<EventSpan> out;
  each_line(jsonl, [&](const json& j) {
    out.push_back({j.at("event").get<std::string>(), j.at("start_s").get<double>(),
                   j.at("end_s").get<double>(), j.at("frame_count").get<int>()});
  });
  return out;
}

}  // namespace framelog::eventlog
