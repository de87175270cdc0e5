#include "framelog/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <system_error>

#include "framelog/error.hpp"

namespace framelog::data {
namespace {

constexpr float kPi = 3.14159265358979f;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ull;
  for (std::uint64_t p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

using Rgb = std::array<float, 3>;

constexpr std::array<Rgb, 8> kEffectPalette{{
    {0.90f, 0.20f, 0.20f},
    {0.95f, 0.60f, 0.10f},
    {0.95f, 0.90f, 0.30f},
    {0.20f, 0.85f, 0.90f},
    {0.25f, 0.35f, 0.95f},
    {0.85f, 0.30f, 0.85f},
    {0.95f, 0.95f, 0.95f},
    {0.50f, 0.95f, 0.30f},
}};

constexpr std::array<Rgb, 4> kTerrain{{
    {0.20f, 0.35f, 0.18f},
    {0.35f, 0.30f, 0.20f},
    {0.25f, 0.28f, 0.32f},
    {0.30f, 0.40f, 0.25f},
}};

const std::array<const char*, 10> kEventNames{
    "black_king_bar", "euls_scepter",  "glyph",      "game_end", "roshan_fight",
    "shivas_guard",   "shrine",        "team_fight", "teleport", "tower_destruction"};

// Shape membership in local coordinates scaled so the effect radius is 1.
bool inside(int shape, float x, float y) {
  const float r = std::hypot(x, y);
  const float ax = std::fabs(x);
  const float ay = std::fabs(y);
  switch (shape) {
    case 0: return r <= 1.0f;                                            // disc
    case 1: return std::max(ax, ay) <= 0.85f;                            // square
    case 2: return y > -0.9f && y < 0.7f && ax < (y + 0.9f) * 0.6f;      // triangle
    case 3: return (ax <= 0.28f && ay <= 1.0f) || (ay <= 0.28f && ax <= 1.0f);  // plus
    case 4: return r >= 0.6f && r <= 1.0f;                               // ring
    case 5: return ax <= 1.0f && ay <= 1.0f && std::fmod(y + 1.0f, 0.5f) < 0.25f;
    case 6: return ax <= 1.0f && ay <= 1.0f && std::fmod(x + 1.0f, 0.5f) < 0.25f;
    case 7: return r <= 1.1f && (std::fabs(x - y) <= 0.35f || std::fabs(x + y) <= 0.35f);
    case 8: return ax + ay <= 1.0f;                                      // diamond
    case 9:
      return ax <= 1.0f && ay <= 1.0f &&
             (static_cast<int>(std::floor((x + 1.0f) * 2.0f)) +
              static_cast<int>(std::floor((y + 1.0f) * 2.0f))) % 2 == 0;
    case 10: {
      const float m = std::max(ax, ay);
      return m <= 0.95f && m >= 0.6f;
    }
    case 11: return r <= 0.4f + 0.6f * std::fabs(std::cos(2.5f * std::atan2(y, x)));
    case 12: return r <= 1.0f && std::hypot(x - 0.45f, y) > 0.8f;
    case 13:
      return std::hypot(x, y + 0.6f) <= 0.35f || std::hypot(x + 0.55f, y - 0.45f) <= 0.35f ||
             std::hypot(x - 0.55f, y - 0.45f) <= 0.35f;
    case 14:
      return (std::fabs(y + 0.7f) <= 0.25f && ax <= 1.0f) ||
             (ax <= 0.25f && y >= -0.7f && y <= 1.0f);
    case 15:
      return (std::fabs(x + 0.7f) <= 0.25f && ay <= 1.0f) ||
             (std::fabs(y - 0.75f) <= 0.25f && x >= -0.95f && x <= 0.9f);
    case 16: return ay <= 0.87f && 0.87f * ax + 0.5f * ay <= 0.87f;      // hexagon
    case 17: return (r >= 0.25f && r <= 0.45f) || (r >= 0.75f && r <= 0.95f);
    case 18: return r <= 1.0f && std::fmod(x + y + 4.0f, 0.6f) < 0.3f;
    case 19: return r <= 1.0f && y >= 0.0f;                              // half disc
    default: return false;
  }
}

struct ClipParams {
  Rgb terrain_a, terrain_b;
  float fa, fb, fc, fd, pa, pb;
  float cx, cy, vx, vy;
  float radius, radius_amp, radius_freq, radius_phase;
  float angle, spin;
  float alpha_phase;
  Rgb color;
};

ClipParams clip_params(const SynthConfig& cfg, int cls, int clip) {
  std::mt19937_64 rng(mix({cfg.seed, static_cast<std::uint64_t>(cfg.task),
                           static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(clip), 1}));
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto range = [&](float lo, float hi) { return lo + (hi - lo) * u(rng); };
  ClipParams p;
  const int ta = static_cast<int>(rng() % kTerrain.size());
  const int tb = static_cast<int>((ta + 1 + rng() % (kTerrain.size() - 1)) % kTerrain.size());
  p.terrain_a = kTerrain[ta];
  p.terrain_b = kTerrain[tb];
  p.fa = range(0.5f, 2.0f);
  p.fb = range(0.5f, 2.0f);
  p.fc = range(0.5f, 2.0f);
  p.fd = range(0.5f, 2.0f);
  p.pa = range(0.0f, 2 * kPi);
  p.pb = range(0.0f, 2 * kPi);
  p.cx = range(0.3f, 0.7f);
  p.cy = range(0.3f, 0.7f);
  const float heading = range(0.0f, 2 * kPi);
  const float speed = range(0.001f, 0.004f);
  p.vx = speed * std::cos(heading);
  p.vy = speed * std::sin(heading);
  p.radius = range(0.22f, 0.30f);
  p.radius_amp = range(0.01f, 0.03f);
  p.radius_freq = range(0.05f, 0.15f);
  p.radius_phase = range(0.0f, 2 * kPi);
  p.angle = range(-0.25f, 0.25f);
  p.spin = range(-0.003f, 0.003f);
  p.alpha_phase = range(0.0f, 2 * kPi);
  // colour carries no class information
  p.color = kEffectPalette[rng() % kEffectPalette.size()];
  return p;
}

// Reflects a drifting coordinate into [lo, hi].
float bounce(float start, float velocity, int t, float lo, float hi) {
  const float span = hi - lo;
  float v = std::fmod(start - lo + velocity * t, 2 * span);
  if (v < 0) v += 2 * span;
  return lo + (v <= span ? v : 2 * span - v);
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void validate(const SynthConfig& cfg) {
  if (cfg.classes < 1 || cfg.classes > 2 * kShapesPerTask) {
    throw ValueError("synth: classes must lie in [1, 20]");
  }
  if (cfg.clips_per_class < 1 || cfg.frames_per_clip < 1) {
    throw ValueError("synth: clips and frames per clip must be positive");
  }
  if (cfg.height < 8 || cfg.width < 8) throw ValueError("synth: image must be at least 8x8");
  if (cfg.fps < 1) throw ValueError("synth: fps must be positive");
  if (cfg.task < 0) throw ValueError("synth: task must be non-negative");
}

}  // namespace

std::vector<std::string> synth_class_names(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<std::string> names;
  for (int k = 0; k < cfg.classes; ++k) {
    if (cfg.task == 0 && k < static_cast<int>(kEventNames.size())) {
      names.emplace_back(kEventNames[k]);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "task%d_class%02d", cfg.task, k);
      names.emplace_back(buf);
    }
  }
  return names;
}

Image synth_render(const SynthConfig& cfg, int cls, int clip, int frame) {
  validate(cfg);
  const ClipParams p = clip_params(cfg, cls, clip);
  const int shape = (cls + kShapesPerTask * cfg.task) % (2 * kShapesPerTask);
  const float t = static_cast<float>(frame);
  const float cx = bounce(p.cx, p.vx, frame, 0.25f, 0.75f);
  const float cy = bounce(p.cy, p.vy, frame, 0.25f, 0.75f);
  const float radius = p.radius + p.radius_amp * std::sin(p.radius_freq * t + p.radius_phase);
  const float angle = p.angle + p.spin * t;
  const float alpha = 0.8f + 0.15f * std::sin(0.2f * t + p.alpha_phase);
  const float ca = std::cos(angle), sa = std::sin(angle);
  const float drift = 0.01f * t;

  std::mt19937_64 noise_rng(mix({cfg.seed, static_cast<std::uint64_t>(cfg.task),
                                 static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(clip),
                                 static_cast<std::uint64_t>(frame), 2}));
  std::normal_distribution<float> noise(0.0f, 0.03f);

  Image img;
  img.height = cfg.height;
  img.width = cfg.width;
  img.rgb.resize(static_cast<std::size_t>(cfg.height) * cfg.width * 3);
  const float scale = static_cast<float>(std::min(cfg.height, cfg.width));
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const float u = (x + 0.5f) / cfg.width;
      const float v = (y + 0.5f) / cfg.height;
      const float field = 0.5f + 0.25f * std::sin(2 * kPi * (p.fa * u + p.fb * v) + p.pa + drift) +
                          0.25f * std::sin(2 * kPi * (p.fc * u - p.fd * v) + p.pb - drift);
      int hits = 0;
      for (int sy = 0; sy < 3; ++sy) {
        for (int sx = 0; sx < 3; ++sx) {
          const float px = (x + (sx + 0.5f) / 3.0f) / scale - cx * cfg.width / scale;
          const float py = (y + (sy + 0.5f) / 3.0f) / scale - cy * cfg.height / scale;
          const float lx = (ca * px + sa * py) / radius;
          const float ly = (-sa * px + ca * py) / radius;
          hits += inside(shape, lx, ly) ? 1 : 0;
        }
      }
      const float cover = alpha * hits / 9.0f;
      Rgb ground;
      for (int c = 0; c < 3; ++c) {
        ground[c] = p.terrain_a[c] * field + p.terrain_b[c] * (1.0f - field);
      }
      for (int c = 0; c < 3; ++c) {
        const float bg = ground[c];
        img.at(y, x, c) = to_byte((1.0f - cover) * bg + cover * p.color[c] + noise(noise_rng));
      }
    }
  }
  return img;
}

LabeledFrameSet synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "frames").string() + "': " + ec.message());
  LabeledFrameSet set;
  set.classes = synth_class_names(cfg);
  set.height = cfg.height;
  set.width = cfg.width;
  set.fps = cfg.fps;
  set.root = out_dir;
  for (int k = 0; k < cfg.classes; ++k) {
    const std::filesystem::path class_dir = out_dir / "frames" / set.classes[k];
    std::filesystem::create_directories(class_dir, ec);
    if (ec) throw IoError("cannot create '" + class_dir.string() + "': " + ec.message());
    for (int clip = 0; clip < cfg.clips_per_class; ++clip) {
      for (int f = 0; f < cfg.frames_per_clip; ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "c%03d_f%04d.ppm", clip, f);
        write_ppm(class_dir / name, synth_render(cfg, k, clip, f));
        set.frames.push_back({"frames/" + set.classes[k] + "/" + name, k, clip, f});
      }
    }
  }
  write_manifest(set, out_dir / "manifest.jsonl");
  return set;
}

FrameTensors synth_tensors(const SynthConfig& cfg) {
  validate(cfg);
  FrameTensors out;
  out.classes = synth_class_names(cfg);
  const int total = cfg.classes * cfg.clips_per_class * cfg.frames_per_clip;
  out.images = nn::Tensor({total, 3, cfg.height, cfg.width});
  int i = 0;
  for (int k = 0; k < cfg.classes; ++k) {
    for (int clip = 0; clip < cfg.clips_per_class; ++clip) {
      for (int f = 0; f < cfg.frames_per_clip; ++f, ++i) {
        const nn::Tensor t = image_to_tensor(synth_render(cfg, k, clip, f));
        std::copy(t.values().begin(), t.values().end(), out.images.sample(i));
        out.labels.push_back(k);
        out.clips.push_back(clip);
      }
    }
  }
  return out;
}

}  // namespace framelog::data
