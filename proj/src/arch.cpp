#include "framelog/arch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "framelog/error.hpp"
#include "framelog/ops.hpp"

namespace framelog::arch {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("arch config line " + std::to_string(line) +
                      ": expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("arch config line " + std::to_string(line) +
                      ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("arch config line " + std::to_string(line) +
                    ": expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), line));
  return out;
}

template <std::size_t N>
std::array<int, N> parse_int_array(const std::string& v, int line) {
  const auto list = parse_int_list(v, line);
  if (list.size() != N) {
    throw FormatError("arch config line " + std::to_string(line) + ": expected " +
                      std::to_string(N) + " comma-separated integers");
  }
  std::array<int, N> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

std::string join(const std::array<int, 4>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," +
         std::to_string(v[2]) + "," + std::to_string(v[3]);
}

// Closed-form weight count of one bottleneck block.
std::int64_t block_weights(std::int64_t in, std::int64_t inner, std::int64_t out,
                           bool projection) {
  std::int64_t n = in * inner + inner * inner * 9 + inner * out;
  if (projection) n += in * out;
  return n;
}

std::int64_t count_conv_stages(const ArchSpec& spec, int stages) {
  std::int64_t total = static_cast<std::int64_t>(spec.stem.kernel) * spec.stem.kernel *
                       spec.input_channels * spec.stem.out_channels;
  std::int64_t in = spec.stem.out_channels;
  for (int s = 0; s < stages; ++s) {
    const std::int64_t inner = spec.inner_width(s);
    const std::int64_t out = spec.out_width(s);
    for (int b = 0; b < spec.depths[s]; ++b) {
      const bool projection = b == 0 && (in != out || ArchSpec::stage_stride(s) != 1);
      total += block_weights(in, inner, out, projection);
      in = out;
    }
  }
  return total;
}

}  // namespace

int pruned_width(double p, int width) {
  return static_cast<int>(std::floor(p * width + 1e-9));
}

int ArchSpec::inner_width(int stage) const {
  return pruned_width(prune_ratio, widths.at(stage));
}

void ArchSpec::validate() const {
  if (!(prune_ratio > 0.0 && prune_ratio <= 1.0)) {
    throw ValueError("prune ratio must lie in (0, 1], got " + std::to_string(prune_ratio));
  }
  for (int s = 0; s < 4; ++s) {
    if (depths[s] < 1) throw ValueError("stage depths must be >= 1");
    if (widths[s] < 1) throw ValueError("stage widths must be >= 1");
    if (inner_width(s) < 1) {
      throw ValueError("pruned inner width floor(" + std::to_string(prune_ratio) + " * " +
                       std::to_string(widths[s]) + ") is below 1 in stage " +
                       std::to_string(s + 1));
    }
  }
  if (expansion < 1) throw ValueError("expansion must be >= 1");
  if (num_classes < 1) throw ValueError("num_classes must be >= 1");
  if (input_channels < 1) throw ValueError("input_channels must be >= 1");
  if (stem.kernel < 1 || stem.kernel % 2 == 0) {
    throw ValueError("stem kernel must be a positive odd size");
  }
  if (stem.stride < 1 || stem.out_channels < 1) {
    throw ValueError("stem stride and out_channels must be positive");
  }
  if (stem.maxpool && (stem.pool_kernel < 1 || stem.pool_stride < 1 || stem.pool_pad < 0 ||
                       stem.pool_pad >= stem.pool_kernel)) {
    throw ValueError("invalid stem max-pool window");
  }
  if (input_height < 1 || input_width < 1) throw ValueError("input size must be positive");
}

ArchSpec apply_prune_ratio(const ArchSpec& spec, double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValueError("prune ratio must lie in (0, 1], got " + std::to_string(p));
  }
  ArchSpec out = spec;
  out.prune_ratio = spec.prune_ratio * p;
  for (int s = 0; s < 4; ++s) {
    if (out.inner_width(s) < 1) {
      throw ValueError("prune ratio " + std::to_string(p) + " leaves stage " +
                       std::to_string(s + 1) + " with no inner channels");
    }
  }
  return out;
}

ArchSpec preset(std::string_view name) {
  ArchSpec spec;
  std::string_view base = name;
  double ratio = 1.0;
  if (name.starts_with("mini")) {
    spec.stem = StemSpec{3, 1, 16, false, 3, 2, 1};
    spec.depths = {1, 1, 1, 1};
    spec.widths = {16, 32, 64, 128};
    spec.expansion = 2;
    spec.input_height = spec.input_width = 64;
    base = name.substr(4);
    if (base.starts_with("-")) base = base.substr(1);
  }
  if (base == "thinet30") {
    ratio = 0.3;
  } else if (base == "thinet50") {
    ratio = 0.5;
  } else if (base == "thinet70") {
    ratio = 0.7;
  } else if (!(base.empty() && name == "mini") && name != "baseline152") {
    throw ValueError("unknown preset '" + std::string(name) + "'");
  }
  spec.name = std::string(name);
  spec.prune_ratio = ratio;
  return spec;
}

std::vector<std::string> preset_names() {
  return {"baseline152", "thinet30",      "thinet50",      "thinet70",
          "mini",        "mini-thinet30", "mini-thinet50", "mini-thinet70"};
}

std::string to_string(TruncationPoint p) {
  switch (p) {
    case TruncationPoint::Stem: return "stem";
    case TruncationPoint::AfterStage1: return "after-stage1";
    case TruncationPoint::AfterStage2: return "after-stage2";
  }
  return "?";
}

TruncationPoint parse_truncation_point(std::string_view s) {
  if (s == "stem") return TruncationPoint::Stem;
  if (s == "after-stage1") return TruncationPoint::AfterStage1;
  if (s == "after-stage2") return TruncationPoint::AfterStage2;
  throw ValueError("unknown truncation point '" + std::string(s) +
                   "' (expected stem, after-stage1, after-stage2)");
}

int stages_before(TruncationPoint p) {
  switch (p) {
    case TruncationPoint::Stem: return 0;
    case TruncationPoint::AfterStage1: return 1;
    case TruncationPoint::AfterStage2: return 2;
  }
  return 0;
}

std::int64_t count_conv_params(const ArchSpec& spec) {
  spec.validate();
  return count_conv_stages(spec, 4);
}

std::int64_t count_conv_params(const ArchSpec& spec, TruncationPoint point) {
  spec.validate();
  return count_conv_stages(spec, stages_before(point));
}

namespace {

std::int64_t count_bn_stages(const ArchSpec& spec, int stages) {
  std::int64_t channels = spec.stem.out_channels;
  std::int64_t in = spec.stem.out_channels;
  for (int s = 0; s < stages; ++s) {
    for (int b = 0; b < spec.depths[s]; ++b) {
      channels += 2 * spec.inner_width(s) + spec.out_width(s);
      if (b == 0 && (in != spec.out_width(s) || ArchSpec::stage_stride(s) != 1)) {
        channels += spec.out_width(s);
      }
      in = spec.out_width(s);
    }
  }
  return 2 * channels;
}

}  // namespace

std::int64_t count_bn_params(const ArchSpec& spec) {
  spec.validate();
  return count_bn_stages(spec, 4);
}

std::int64_t count_fc_params(const ArchSpec& spec) {
  return static_cast<std::int64_t>(spec.feature_width()) * spec.num_classes + spec.num_classes;
}

std::int64_t count_total_params(const ArchSpec& spec) {
  return count_conv_params(spec) + count_bn_params(spec) + count_fc_params(spec);
}

std::int64_t count_total_params(const ArchSpec& spec, TruncationPoint point) {
  return count_conv_params(spec, point) + count_bn_stages(spec, stages_before(point));
}

std::vector<ConvLayout> conv_layout(const ArchSpec& spec) {
  spec.validate();
  std::vector<ConvLayout> out;
  out.push_back({"stem.conv", spec.input_channels, spec.stem.out_channels, spec.stem.kernel,
                 spec.stem.stride, spec.stem.kernel / 2});
  int in = spec.stem.out_channels;
  for (int s = 0; s < 4; ++s) {
    const int inner = spec.inner_width(s);
    const int width = spec.out_width(s);
    for (int b = 0; b < spec.depths[s]; ++b) {
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      const int stride = b == 0 ? ArchSpec::stage_stride(s) : 1;
      out.push_back({prefix + ".conv1", in, inner, 1, 1, 0});
      out.push_back({prefix + ".conv2", inner, inner, 3, stride, 1});
      out.push_back({prefix + ".conv3", inner, width, 1, 1, 0});
      if (in != width || stride != 1) {
        out.push_back({prefix + ".downsample.conv", in, width, 1, stride, 0});
      }
      in = width;
    }
  }
  return out;
}

namespace {

MemoryEstimate estimate_memory_stages(const ArchSpec& spec, int stages, int channels, int height,
                                      int width, int batch) {
  spec.validate();
  if (channels != spec.input_channels || height < 1 || width < 1 || batch < 1) {
    throw ShapeError("estimate_memory: invalid input shape or batch");
  }
  MemoryEstimate est;
  est.param_bytes = 4 * (count_conv_stages(spec, stages) + count_bn_stages(spec, stages) +
                         (stages == 4 ? count_fc_params(spec) : 0));

  std::int64_t peak = 0;
  auto live = [&](std::int64_t elems) { peak = std::max(peak, elems); };
  auto size = [](std::int64_t c, std::int64_t h, std::int64_t w) { return c * h * w; };

  int h = nn::conv_out_extent(height, spec.stem.kernel, spec.stem.stride, spec.stem.kernel / 2);
  int w = nn::conv_out_extent(width, spec.stem.kernel, spec.stem.stride, spec.stem.kernel / 2);
  if (h < 1 || w < 1) throw ShapeError("estimate_memory: input too small for stem");
  const std::int64_t input = size(channels, height, width);
  const std::int64_t stem = size(spec.stem.out_channels, h, w);
  live(input + stem);  // conv
  live(2 * stem);      // batch norm, relu
  std::int64_t current = stem;
  if (spec.stem.maxpool) {
    h = nn::conv_out_extent(h, spec.stem.pool_kernel, spec.stem.pool_stride, spec.stem.pool_pad);
    w = nn::conv_out_extent(w, spec.stem.pool_kernel, spec.stem.pool_stride, spec.stem.pool_pad);
    const std::int64_t pooled = size(spec.stem.out_channels, h, w);
    live(current + pooled);
    current = pooled;
  }
  int in = spec.stem.out_channels;
  for (int s = 0; s < stages; ++s) {
    const int inner = spec.inner_width(s);
    const int out_c = spec.out_width(s);
    for (int b = 0; b < spec.depths[s]; ++b) {
      const int stride = b == 0 ? ArchSpec::stage_stride(s) : 1;
      const int oh = nn::conv_out_extent(h, 3, stride, 1);
      const int ow = nn::conv_out_extent(w, 3, stride, 1);
      const std::int64_t x = current;
      const std::int64_t t1 = size(inner, h, w);
      const std::int64_t t2 = size(inner, oh, ow);
      const std::int64_t t3 = size(out_c, oh, ow);
      live(x + t1);       // conv1
      live(x + 2 * t1);   // bn1, relu1
      live(x + t1 + t2);  // conv2
      live(x + 2 * t2);   // bn2, relu2
      live(x + t2 + t3);  // conv3
      live(x + 2 * t3);   // bn3
      std::int64_t shortcut = x;
      if (in != out_c || stride != 1) {
        live(x + t3 + t3);  // projection conv
        live(3 * t3);       // projection bn (block input released)
        shortcut = t3;
      }
      live(t3 + shortcut + t3);  // residual add
      live(2 * t3);              // final relu
      current = t3;
      in = out_c;
      h = oh;
      w = ow;
    }
  }
  if (stages == 4) {
    live(current + in);           // global average pool
    live(in + spec.num_classes);  // fully-connected
  }
  est.activation_bytes = 4 * peak * batch;
  return est;
}

}  // namespace

MemoryEstimate estimate_memory(const ArchSpec& spec, int channels, int height, int width,
                               int batch) {
  return estimate_memory_stages(spec, 4, channels, height, width, batch);
}

MemoryEstimate estimate_memory(const ArchSpec& spec, TruncationPoint point, int channels,
                               int height, int width, int batch) {
  return estimate_memory_stages(spec, stages_before(point), channels, height, width, batch);
}

std::string to_config(const ArchSpec& spec) {
  char ratio[64];
  std::snprintf(ratio, sizeof(ratio), "%.17g", spec.prune_ratio);
  std::ostringstream out;
  out << "name = " << spec.name << "\n"
      << "stem.kernel = " << spec.stem.kernel << "\n"
      << "stem.stride = " << spec.stem.stride << "\n"
      << "stem.out_channels = " << spec.stem.out_channels << "\n"
      << "stem.maxpool = " << (spec.stem.maxpool ? "true" : "false") << "\n"
      << "stem.pool_kernel = " << spec.stem.pool_kernel << "\n"
      << "stem.pool_stride = " << spec.stem.pool_stride << "\n"
      << "stem.pool_pad = " << spec.stem.pool_pad << "\n"
      << "depths = " << join(spec.depths) << "\n"
      << "widths = " << join(spec.widths) << "\n"
      << "expansion = " << spec.expansion << "\n"
      << "prune_ratio = " << ratio << "\n"
      << "num_classes = " << spec.num_classes << "\n"
      << "input_channels = " << spec.input_channels << "\n"
      << "input_size = " << spec.input_height << "," << spec.input_width << "\n";
  return out.str();
}

ArchSpec parse_config(std::string_view text) {
  ArchSpec spec;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw FormatError("arch config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key == "name") {
      spec.name = value;
    } else if (key == "stem.kernel") {
      spec.stem.kernel = parse_int(value, line);
    } else if (key == "stem.stride") {
      spec.stem.stride = parse_int(value, line);
    } else if (key == "stem.out_channels") {
      spec.stem.out_channels = parse_int(value, line);
    } else if (key == "stem.maxpool") {
      spec.stem.maxpool = parse_bool(value, line);
    } else if (key == "stem.pool_kernel") {
      spec.stem.pool_kernel = parse_int(value, line);
    } else if (key == "stem.pool_stride") {
      spec.stem.pool_stride = parse_int(value, line);
    } else if (key == "stem.pool_pad") {
      spec.stem.pool_pad = parse_int(value, line);
    } else if (key == "depths") {
      spec.depths = parse_int_array<4>(value, line);
    } else if (key == "widths") {
      spec.widths = parse_int_array<4>(value, line);
    } else if (key == "expansion") {
      spec.expansion = parse_int(value, line);
    } else if (key == "prune_ratio") {
      spec.prune_ratio = parse_double(value, line);
    } else if (key == "num_classes") {
      spec.num_classes = parse_int(value, line);
    } else if (key == "input_channels") {
      spec.input_channels = parse_int(value, line);
    } else if (key == "input_size") {
      const auto hw = parse_int_array<2>(value, line);
      spec.input_height = hw[0];
      spec.input_width = hw[1];
    } else {
      throw FormatError("arch config line " + std::to_string(line) + ": unknown key '" +
                        key + "'");
    }
  }
  spec.validate();
  return spec;
}

}  // namespace framelog::arch
