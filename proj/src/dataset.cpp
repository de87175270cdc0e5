#include "framelog/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "framelog/checkpoint.hpp"
#include "framelog/error.hpp"

namespace framelog::data {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::filesystem::path& path, int line, const std::string& msg) {
  throw FormatError("manifest " + path.string() + " line " + std::to_string(line) + ": " + msg);
}

int require_int(const json& obj, const char* key, const std::filesystem::path& path, int line) {
  if (!obj.contains(key) || !obj[key].is_number_integer()) {
    fail(path, line, std::string("missing integer field \"") + key + "\"");
  }
  const auto v = obj[key].get<long long>();
  if (v < 0) fail(path, line, std::string("field \"") + key + "\" must be >= 0");
  return static_cast<int>(v);
}

}  // namespace

int LabeledFrameSet::class_index(std::string_view name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw ValueError("unknown class '" + std::string(name) + "'");
  return static_cast<int>(it - classes.begin());
}

std::filesystem::path LabeledFrameSet::resolve(const LabeledFrame& f) const {
  const std::filesystem::path p(f.path);
  return p.is_absolute() ? p : root / p;
}

std::vector<int> LabeledFrameSet::class_counts() const {
  std::vector<int> counts(classes.size(), 0);
  for (const auto& f : frames) ++counts.at(f.label);
  return counts;
}

void canonicalize(LabeledFrameSet& set) {
  std::stable_sort(set.frames.begin(), set.frames.end(),
                   [](const LabeledFrame& a, const LabeledFrame& b) {
                     return std::tie(a.label, a.clip, a.index) < std::tie(b.label, b.clip, b.index);
                   });
}

LabeledFrameSet load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  LabeledFrameSet set;
  set.root = path.parent_path();
  std::set<std::string> seen_paths;
  std::string raw;
  int line = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(raw);
    } catch (const json::parse_error& e) {
      fail(path, line, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) fail(path, line, "expected a JSON object");
    if (!have_header) {
      if (!obj.contains("classes") || !obj["classes"].is_array() || obj["classes"].empty()) {
        fail(path, line, "header needs a non-empty \"classes\" array");
      }
      std::set<std::string> unique;
      for (const auto& c : obj["classes"]) {
        if (!c.is_string()) fail(path, line, "class names must be strings");
        if (!unique.insert(c.get<std::string>()).second) {
          fail(path, line, "duplicate class name '" + c.get<std::string>() + "'");
        }
        set.classes.push_back(c.get<std::string>());
      }
      set.fps = require_int(obj, "fps", path, line);
      if (set.fps < 1) fail(path, line, "fps must be positive");
      if (!obj.contains("image_size") || !obj["image_size"].is_array() ||
          obj["image_size"].size() != 2 || !obj["image_size"][0].is_number_integer() ||
          !obj["image_size"][1].is_number_integer()) {
        fail(path, line, "header needs \"image_size\": [height, width]");
      }
      set.height = obj["image_size"][0].get<int>();
      set.width = obj["image_size"][1].get<int>();
      if (set.height < 1 || set.width < 1) fail(path, line, "image_size must be positive");
      have_header = true;
      continue;
    }
    LabeledFrame f;
    if (!obj.contains("path") || !obj["path"].is_string()) fail(path, line, "missing \"path\"");
    if (!obj.contains("label") || !obj["label"].is_string()) fail(path, line, "missing \"label\"");
    f.path = obj["path"].get<std::string>();
    const std::string label = obj["label"].get<std::string>();
    const auto it = std::find(set.classes.begin(), set.classes.end(), label);
    if (it == set.classes.end()) fail(path, line, "unknown label '" + label + "'");
    f.label = static_cast<int>(it - set.classes.begin());
    f.clip = require_int(obj, "clip", path, line);
    f.index = require_int(obj, "index", path, line);
    if (!seen_paths.insert(f.path).second) fail(path, line, "duplicate path '" + f.path + "'");
    if (!std::filesystem::exists(set.resolve(f))) {
      fail(path, line, "frame file '" + set.resolve(f).string() + "' does not exist");
    }
    set.frames.push_back(std::move(f));
  }
  if (!have_header) throw FormatError("manifest " + path.string() + " is empty");
  if (set.frames.empty()) throw FormatError("manifest " + path.string() + " lists no frames");
  canonicalize(set);
  return set;
}

std::string manifest_text(const LabeledFrameSet& set) {
  json header;
  header["classes"] = set.classes;
  header["fps"] = set.fps;
  header["image_size"] = {set.height, set.width};
  std::string out = header.dump() + "\n";
  for (const auto& f : set.frames) {
    json j;
    j["path"] = f.path;
    j["label"] = set.classes.at(f.label);
    j["clip"] = f.clip;
    j["index"] = f.index;
    out += j.dump() + "\n";
  }
  return out;
}

void write_manifest(const LabeledFrameSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << manifest_text(set);
}

std::uint64_t dataset_hash(const LabeledFrameSet& set) {
  const std::string text = manifest_text(set);
  std::uint64_t h = fnv1a64(text.data(), text.size());
  for (const auto& f : set.frames) {
    const std::string bytes = read_file(set.resolve(f));
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

bool is_test_position(std::size_t i, double test_fraction, std::uint64_t phase) {
  const double a = static_cast<double>(i + phase) * test_fraction;
  const double b = static_cast<double>(i + phase + 1) * test_fraction;
  return std::floor(b + 1e-9) > std::floor(a + 1e-9);
}

namespace {

void check_ratio(const SplitRule& rule) {
  if (!(rule.ratio > 0.0 && rule.ratio < 1.0)) {
    throw ValueError("split ratio must lie strictly between 0 and 1, got " +
                     std::to_string(rule.ratio));
  }
}

}  // namespace

std::vector<bool> test_mask(std::span<const int> labels, std::span<const int> clips,
                            const SplitRule& rule) {
  check_ratio(rule);
  if (labels.size() != clips.size()) throw ShapeError("test_mask: labels/clips length mismatch");
  const double test_fraction = 1.0 - rule.ratio;
  std::vector<bool> mask(labels.size());
  if (rule.mode == SplitMode::FrameStride) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = is_test_position(i, test_fraction, rule.seed);
    }
    return mask;
  }
  // Clips are numbered in canonical order of their first frame.
  std::size_t ordinal = 0;
  std::pair<int, int> current{-1, -1};
  bool held_out = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (std::pair{labels[i], clips[i]} != current) {
      current = {labels[i], clips[i]};
      held_out = is_test_position(ordinal++, test_fraction, rule.seed);
    }
    mask[i] = held_out;
  }
  return mask;
}

Split split(const LabeledFrameSet& set, const SplitRule& rule) {
  check_ratio(rule);
  std::vector<int> labels, clips;
  for (const auto& f : set.frames) {
    labels.push_back(f.label);
    clips.push_back(f.clip);
  }
  const auto mask = test_mask(labels, clips, rule);
  Split out;
  for (LabeledFrameSet* part : {&out.train, &out.test}) {
    part->classes = set.classes;
    part->height = set.height;
    part->width = set.width;
    part->fps = set.fps;
    part->root = set.root;
  }
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    (mask[i] ? out.test : out.train).frames.push_back(set.frames[i]);
  }
  return out;
}

FrameTensors FrameTensors::subset(std::span<const int> indices) const {
  FrameTensors out;
  out.classes = classes;
  out.images = images.gather_batch(indices);
  for (int i : indices) {
    out.labels.push_back(labels.at(i));
    out.clips.push_back(clips.empty() ? 0 : clips.at(i));
  }
  return out;
}

TensorSplit split(const FrameTensors& frames, const SplitRule& rule) {
  std::vector<int> clips = frames.clips;
  if (clips.empty()) clips.assign(frames.labels.size(), 0);
  const auto mask = test_mask(frames.labels, clips, rule);
  std::vector<int> train_idx, test_idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? test_idx : train_idx).push_back(static_cast<int>(i));
  }
  return {frames.subset(train_idx), frames.subset(test_idx)};
}

std::vector<float> encode_label(const LabeledFrameSet& set, std::string_view name) {
  std::vector<float> v(set.classes.size(), 0.0f);
  v[set.class_index(name)] = 1.0f;
  return v;
}

std::string decode_label(const LabeledFrameSet& set, std::span<const float> one_hot) {
  if (one_hot.size() != set.classes.size()) {
    throw ShapeError("one-hot length " + std::to_string(one_hot.size()) + " vs " +
                     std::to_string(set.classes.size()) + " classes");
  }
  const auto it = std::max_element(one_hot.begin(), one_hot.end());
  return set.classes[it - one_hot.begin()];
}

nn::Tensor image_to_tensor(const Image& img) {
  nn::Tensor t({1, 3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) t[c * plane + p] = img.rgb[p * 3 + c] / 255.0f;
  }
  return t;
}

FrameTensors decode(const LabeledFrameSet& set) {
  if (set.frames.empty()) throw ValueError("cannot decode an empty frame set");
  FrameTensors out;
  out.classes = set.classes;
  out.images = nn::Tensor({static_cast<int>(set.frames.size()), 3, set.height, set.width});
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    const auto& f = set.frames[i];
    Image img;
    try {
      img = read_ppm(set.resolve(f));
    } catch (const Error& e) {
      throw IoError("frame " + std::to_string(i) + ": " + e.what());
    }
    if (img.height != set.height || img.width != set.width) {
      throw ShapeError("frame " + std::to_string(i) + " is " + std::to_string(img.height) + "x" +
                       std::to_string(img.width) + ", manifest declares " +
                       std::to_string(set.height) + "x" + std::to_string(set.width));
    }
    const nn::Tensor t = image_to_tensor(img);
    std::copy(t.values().begin(), t.values().end(), out.images.sample(static_cast<int>(i)));
    out.labels.push_back(f.label);
    out.clips.push_back(f.clip);
  }
  return out;
}

Normalizer Normalizer::fit(const nn::Tensor& images) {
  const nn::Shape s = images.shape();
  if (s.n == 0) throw ValueError("cannot fit normalizer on zero images");
  Normalizer out;
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(plane) * s.n;
  for (int c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = images.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    const double mean = acc / count;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = images.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    out.mean.push_back(static_cast<float>(mean));
    out.stddev.push_back(static_cast<float>(std::max(std::sqrt(sq / count), 1e-6)));
  }
  return out;
}

Normalizer Normalizer::identity(int channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

nn::Tensor Normalizer::apply(const nn::Tensor& images) const {
  const nn::Shape s = images.shape();
  if (static_cast<std::size_t>(s.c) != mean.size()) {
    throw ShapeError("normalizer has " + std::to_string(mean.size()) +
                     " channels, images have " + std::to_string(s.c));
  }
  nn::Tensor out(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = images.sample(n) + c * plane;
      float* o = out.sample(n) + c * plane;
      const float inv = 1.0f / stddev[c];
      for (std::size_t i = 0; i < plane; ++i) o[i] = (p[i] - mean[c]) * inv;
    }
  }
  return out;
}

nn::Tensor Normalizer::mean_tensor() const {
  return nn::Tensor({1, static_cast<int>(mean.size()), 1, 1}, mean);
}

nn::Tensor Normalizer::stddev_tensor() const {
  return nn::Tensor({1, static_cast<int>(stddev.size()), 1, 1}, stddev);
}

Normalizer Normalizer::from_tensors(const nn::Tensor& m, const nn::Tensor& s) {
  if (m.shape() != s.shape()) throw ShapeError("normalizer mean/stddev shape mismatch");
  return {std::vector<float>(m.values().begin(), m.values().end()),
          std::vector<float>(s.values().begin(), s.values().end())};
}

}  // namespace framelog::data
