#include "framelog/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "framelog/arch.hpp"
#include "framelog/bench.hpp"
#include "framelog/checkpoint.hpp"
#include "framelog/dataset.hpp"
#include "framelog/error.hpp"
#include "framelog/eventlog.hpp"
#include "framelog/image.hpp"
#include "framelog/synth.hpp"
#include "framelog/training.hpp"
#include "framelog/zeroshot.hpp"

namespace framelog::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- logging --------------------------------------------------------------

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

Level log_level() {
  const char* v = std::getenv("FRAMELOG_LOG_LEVEL");
  if (v == nullptr) return Level::Info;
  const std::string s(v);
  if (s == "quiet" || s == "error" || s == "0") return Level::Quiet;
  if (s == "debug" || s == "2") return Level::Debug;
  return Level::Info;
}

void log(Level level, const std::string& msg) {
  if (static_cast<int>(log_level()) >= static_cast<int>(level)) std::cerr << msg << "\n";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- JSON --config ----------------------------------------------------------
//
// Top-level keys set global options, nested objects address the subcommand of
// the same name: {"seed": 3, "train": {"epochs": 10}}. Values given on the
// command line win. A RunManifest is itself a valid config file.

class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const json& obj, const std::vector<std::string>& parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_null()) continue;
      // RunManifest bookkeeping, not options
      if (parents.empty() && (key == "subcommand" || key == "version" || key == "inputs" ||
                              key == "outputs"))
        continue;
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        walk(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

// ---- run manifest ----------------------------------------------------------

json resolved_options(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* o : sub->get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help" || name == "h") continue;
    if (o->get_expected_min() == 0) {
      j[name] = o->count() > 0 && o->as<bool>();
      continue;
    }
    const std::string v = o->count() > 0 ? o->as<std::string>() : o->get_default_str();
    j[name] = v.empty() ? json(nullptr) : json(v);
  }
  return j;
}

struct Manifest {
  const CLI::App* sub = nullptr;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void write(const fs::path& path) const {
    json j;
    j["subcommand"] = sub->get_name();
    j["version"] = kVersion;
    j["seed"] = seed;
    j[sub->get_name()] = resolved_options(sub);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_file(path, j.dump(2) + "\n");
  }
};

fs::path beside(const fs::path& out) { return fs::path(out.string() + ".run.json"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

// ---- shared option groups ---------------------------------------------------

struct SplitOpts {
  double ratio = 0.8;
  std::string mode = "frame";
  std::uint64_t phase = 0;

  void add(CLI::App* sub) {
    sub->add_option("--split", ratio, "Training fraction of the frames");
    sub->add_option("--split-mode", mode, "frame: stride over frames; clip: whole clips")
        ->check(CLI::IsMember({"frame", "clip"}));
    sub->add_option("--split-phase", phase, "Offset of the stride pattern");
  }
  data::SplitRule rule() const {
    return {ratio, mode == "clip" ? data::SplitMode::ClipStride : data::SplitMode::FrameStride,
            phase};
  }
};

struct ArchOpts {
  std::string preset;
  std::string config;
  std::string depths;
  double p = 0;

  void add(CLI::App* sub, const std::string& default_preset) {
    preset = default_preset;
    sub->add_option("--preset", preset, "Architecture preset");
    sub->add_option("--arch-config", config, "Architecture config file (overrides --preset)");
    sub->add_option("--depths", depths, "Blocks per stage, e.g. 3,4,6,3");
    sub->add_option("--p", p, "Prune ratio in (0, 1]; replaces the preset's ratio");
  }

  arch::ArchSpec resolve() const {
    arch::ArchSpec spec;
    if (!config.empty()) {
      spec = arch::parse_config(read_file(config));
    } else if (!preset.empty()) {
      spec = arch::preset(preset);
    } else {
      throw UsageError("no architecture: give --preset or --arch-config");
    }
    if (!depths.empty()) {
      std::array<int, 4> d{};
      std::stringstream in(depths);
      std::string item;
      int i = 0;
      while (std::getline(in, item, ',')) {
        if (i == 4) throw UsageError("--depths takes exactly four integers");
        try {
          d[i++] = std::stoi(item);
        } catch (const std::exception&) {
          throw UsageError("--depths: '" + item + "' is not an integer");
        }
      }
      if (i != 4) throw UsageError("--depths takes exactly four integers");
      spec.depths = d;
    }
    if (p != 0) {
      spec.prune_ratio = 1.0;
      spec = arch::apply_prune_ratio(spec, p);
    }
    spec.validate();
    return spec;
  }
};

struct TrainOpts {
  std::string data;
  std::string out;
  int epochs = 30;
  int batch = 16;
  float lr = 1e-3f;
  double threshold = 0.95;
  int patience = 2;
  bool freeze = false;
  SplitOpts split;
  ArchOpts arch;

  void add(CLI::App* sub, const std::string& default_preset, float default_lr) {
    lr = default_lr;
    sub->add_option("--data", data, "Frame manifest (JSON Lines)")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--epochs", epochs)->check(CLI::Range(1, 100000));
    sub->add_option("--batch", batch)->check(CLI::Range(1, 100000));
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--threshold", threshold, "Convergence train-accuracy threshold");
    sub->add_option("--patience", patience, "Consecutive epochs at threshold");
    sub->add_flag("--freeze-backbone", freeze, "Train only the classification head");
    split.add(sub);
    arch.add(sub, default_preset);
  }

  train::TrainConfig config(std::uint64_t seed) const {
    train::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.adam.lr = lr;
    cfg.seed = seed;
    cfg.threshold = threshold;
    cfg.patience = patience;
    cfg.freeze_backbone = freeze;
    cfg.on_epoch = [](const train::EpochRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "epoch %d  train_loss %.4f  train_acc %.4f  test_loss %.4f  test_acc %.4f",
                    r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc);
      log(Level::Info, buf);
    };
    return cfg;
  }
};

struct LoadedData {
  data::LabeledFrameSet set;
  data::TensorSplit split;
};

LoadedData load_split(const std::string& manifest, const SplitOpts& opts) {
  LoadedData d;
  d.set = data::load_manifest(manifest);
  log(Level::Debug, "loaded " + std::to_string(d.set.frames.size()) + " frames from " + manifest);
  d.split = data::split(data::decode(d.set), opts.rule());
  log(Level::Info, "split: " + std::to_string(d.split.train.size()) + " train / " +
                       std::to_string(d.split.test.size()) + " test frames");
  return d;
}

arch::ArchSpec fit_to_data(arch::ArchSpec spec, const data::LabeledFrameSet& set) {
  spec.input_height = set.height;
  spec.input_width = set.width;
  spec.num_classes = static_cast<int>(set.classes.size());
  return spec;
}

void write_training_outputs(const train::TrainResult& r, const fs::path& out, Manifest& m) {
  ensure_dir(out);
  r.checkpoint().save(out / "model.flog");
  write_file(out / "curves.csv", r.curves.csv());
  json summary;
  summary["converged_epoch"] = r.converged_epoch ? json(*r.converged_epoch) : json(nullptr);
  const auto& last = r.curves.records.back();
  summary["final_train_acc"] = last.train_acc;
  summary["final_test_acc"] = last.test_acc;
  summary["final_test_loss"] = last.test_loss;
  write_file(out / "summary.json", summary.dump(2) + "\n");
  for (const char* f : {"model.flog", "curves.csv", "summary.json"}) {
    m.outputs.push_back((out / f).string());
  }
  m.write(out / "run_manifest.json");
  std::printf("converged_epoch=%s\nfinal_test_acc=%.6f\n",
              r.converged_epoch ? std::to_string(*r.converged_epoch).c_str() : "none",
              last.test_acc);
}

/// Frames of a manifest (canonical order) or a directory of .ppm files
/// (lexicographic order).
struct FrameSource {
  std::string manifest;
  std::string dir;

  void add(CLI::App* sub) {
    auto* a = sub->add_option("--data", manifest, "Frame manifest");
    auto* b = sub->add_option("--frames-dir", dir, "Directory of .ppm frames");
    a->excludes(b);
  }

  std::vector<fs::path> paths(int* fps) const {
    if (manifest.empty() == dir.empty()) throw UsageError("give exactly one of --data, --frames-dir");
    std::vector<fs::path> out;
    if (!manifest.empty()) {
      const auto set = data::load_manifest(manifest);
      if (fps != nullptr) *fps = set.fps;
      for (const auto& f : set.frames) out.push_back(set.resolve(f));
      return out;
    }
    if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ValueError("no .ppm frames in '" + dir + "'");
    return out;
  }
};

nn::Tensor read_frames(const std::vector<fs::path>& paths) {
  std::vector<nn::Tensor> frames;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    try {
      frames.push_back(data::image_to_tensor(data::read_ppm(paths[i])));
    } catch (const Error& e) {
      throw IoError("frame " + std::to_string(i) + ": " + e.what());
    }
    if (!(frames.back().shape() == frames.front().shape())) {
      throw ShapeError("frame " + std::to_string(i) + " differs in size from frame 0");
    }
  }
  return nn::stack(frames);
}

// ---- subcommands -------------------------------------------------------------

struct SynthCmd {
  CLI::App* sub;
  data::SynthConfig cfg;
  std::string out;
  int size = 64;

  explicit SynthCmd(CLI::App& app) {
    sub = app.add_subcommand("synth", "Render a synthetic labeled frame corpus");
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--classes", cfg.classes)->check(CLI::Range(1, 20));
    sub->add_option("--clips", cfg.clips_per_class, "Clips per class")->check(CLI::PositiveNumber);
    sub->add_option("--frames", cfg.frames_per_clip, "Frames per clip")->check(CLI::PositiveNumber);
    sub->add_option("--size", size, "Frame height and width")->check(CLI::Range(8, 4096));
    sub->add_option("--fps", cfg.fps)->check(CLI::PositiveNumber);
    sub->add_option("--task", cfg.task, "Pattern family (0: events, 1: source task)")
        ->check(CLI::NonNegativeNumber);
  }

  void run(std::uint64_t seed) {
    cfg.seed = seed;
    cfg.height = cfg.width = size;
    const auto set = data::synth_generate(cfg, out);
    const std::uint64_t h = data::dataset_hash(set);
    Manifest m{sub, seed, {}, {(fs::path(out) / "manifest.jsonl").string()}};
    m.write(fs::path(out) / "run_manifest.json");
    log(Level::Info, "wrote " + std::to_string(set.frames.size()) + " frames to " + out);
    std::printf("frames=%zu\ndataset_hash=%s\n", set.frames.size(), hex64(h).c_str());
  }
};

struct TrainCmd {
  CLI::App* sub;
  TrainOpts opts;

  explicit TrainCmd(CLI::App& app) {
    sub = app.add_subcommand("train", "Train a classifier from scratch");
    opts.add(sub, "mini", 1e-3f);
  }

  void run(std::uint64_t seed) {
    const auto d = load_split(opts.data, opts.split);
    const auto spec = fit_to_data(opts.arch.resolve(), d.set);
    const auto r = train::train_standard(spec, d.split.train, d.split.test, opts.config(seed));
    Manifest m{sub, seed, {opts.data}, {}};
    if (!opts.arch.config.empty()) m.inputs.push_back(opts.arch.config);
    write_training_outputs(r, opts.out, m);
  }
};

struct TransferCmd {
  CLI::App* sub;
  TrainOpts opts;
  std::string teacher;

  explicit TransferCmd(CLI::App& app) {
    sub = app.add_subcommand("transfer", "Fine-tune a student initialized from a teacher");
    // an empty preset means: use the teacher's architecture
    opts.add(sub, "", 1e-3f);
    sub->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  }

  void run(std::uint64_t seed) {
    const Checkpoint ck = Checkpoint::load(teacher);
    arch::ArchSpec spec;
    if (opts.arch.preset.empty() && opts.arch.config.empty()) {
      if (!opts.arch.depths.empty() || opts.arch.p != 0) {
        throw UsageError("--depths/--p need --preset or --arch-config");
      }
      spec = train::Classifier::from_checkpoint(ck).net.spec();
    } else {
      spec = opts.arch.resolve();
    }
    const auto d = load_split(opts.data, opts.split);
    spec = fit_to_data(spec, d.set);
    const auto r = train::train_transfer(ck, spec, d.split.train, d.split.test, opts.config(seed));
    Manifest m{sub, seed, {opts.data, teacher}, {}};
    write_training_outputs(r, opts.out, m);
  }
};

struct KnstCmd {
  CLI::App* sub;
  TrainOpts opts;
  std::string style;
  int width = 16;
  bool identity = false;

  explicit KnstCmd(CLI::App& app) {
    sub = app.add_subcommand("knst", "Train with a kernel stylizer on the first convolution");
    opts.add(sub, "mini", 1e-3f);
    sub->add_option("--style", style, "Style image (.ppm); default: first training frame");
    sub->add_option("--stylizer-width", width)->check(CLI::PositiveNumber);
    sub->add_flag("--identity", identity, "Use the identity stylizer");
  }

  void run(std::uint64_t seed) {
    const auto d = load_split(opts.data, opts.split);
    const auto spec = fit_to_data(opts.arch.resolve(), d.set);
    train::KnstOptions k;
    k.stylizer.width = width;
    k.identity = identity;
    Manifest m{sub, seed, {opts.data}, {}};
    if (!style.empty()) {
      k.style_image = data::image_to_tensor(data::read_ppm(style));
      m.inputs.push_back(style);
    } else {
      k.style_image = d.split.train.images.slice_batch(0, 1);
    }
    const auto r = train::train_knst(spec, d.split.train, d.split.test, opts.config(seed), k);
    write_training_outputs(r, opts.out, m);
  }
};

struct ZsBuildCmd {
  CLI::App* sub;
  std::string model, data_path, out, truncate = "stem";
  SplitOpts split;

  explicit ZsBuildCmd(CLI::App& app) {
    sub = app.add_subcommand("zeroshot-build", "Build class prototypes from a truncated backbone");
    sub->add_option("--model", model, "Pretrained classifier checkpoint")->required();
    sub->add_option("--data", data_path, "Frame manifest")->required();
    sub->add_option("--out", out, "Prototype file (a .json sidecar is written next to it)")
        ->required();
    sub->add_option("--truncate", truncate)
        ->check(CLI::IsMember({"stem", "after-stage1", "after-stage2"}));
    split.add(sub);
  }

  void run(std::uint64_t seed) {
    const auto ex = zeroshot::Extractor::from_classifier(train::Classifier::load(model),
                                                         arch::parse_truncation_point(truncate));
    const auto d = load_split(data_path, split);
    const auto protos = zeroshot::build_prototypes(ex, d.split.train);
    ensure_parent(out);
    protos.save(out);
    Manifest m{sub, seed, {model, data_path},
               {out, zeroshot::PrototypeSet::sidecar_path(out).string()}};
    m.write(beside(out));
    std::printf("fingerprint=%s\n", hex64(protos.fingerprint).c_str());
  }
};

struct ZsEvalCmd {
  CLI::App* sub;
  std::string model, prototypes, data_path, out, scope = "test";
  SplitOpts split;

  explicit ZsEvalCmd(CLI::App& app) {
    sub = app.add_subcommand("zeroshot-eval", "Classify frames by nearest prototype");
    sub->add_option("--model", model, "Checkpoint the prototypes were built from")->required();
    sub->add_option("--prototypes", prototypes)->required();
    sub->add_option("--data", data_path)->required();
    sub->add_option("--scope", scope, "Evaluate the test split or all frames")
        ->check(CLI::IsMember({"test", "all"}));
    sub->add_option("--out", out, "JSON report");
    split.add(sub);
  }

  void run(std::uint64_t seed) {
    const auto protos = zeroshot::PrototypeSet::load(prototypes);
    const auto ex = zeroshot::Extractor::from_classifier(train::Classifier::load(model), protos.point);
    const auto d = load_split(data_path, split);
    const data::FrameTensors all = scope == "all" ? data::decode(d.set) : data::FrameTensors{};
    const auto ev = zeroshot::zs_evaluate(ex, protos, scope == "all" ? all : d.split.test);
    json j;
    j["accuracy"] = ev.accuracy;
    json per = json::object();
    for (std::size_t c = 0; c < protos.classes.size(); ++c) {
      per[protos.classes[c]] = std::isnan(ev.per_class[c]) ? json(nullptr) : json(ev.per_class[c]);
    }
    j["per_class"] = per;
    j["scope"] = scope;
    std::printf("accuracy=%.6f\n", ev.accuracy);
    if (!out.empty()) {
      ensure_parent(out);
      write_file(out, j.dump(2) + "\n");
      Manifest m{sub, seed, {model, prototypes, data_path}, {out}};
      m.write(beside(out));
    }
  }
};

struct PredictCmd {
  CLI::App* sub;
  std::string model, out;
  FrameSource frames;

  explicit PredictCmd(CLI::App& app) {
    sub = app.add_subcommand("predict", "Label frames with a trained classifier");
    sub->add_option("--model", model)->required();
    sub->add_option("--out", out, "CSV output (default: standard output)");
    frames.add(sub);
  }

  void run(std::uint64_t seed) {
    const auto clf = train::Classifier::load(model);
    const auto paths = frames.paths(nullptr);
    const nn::Tensor logits = clf.logits(read_frames(paths));
    std::string csv = "index,path,prediction,confidence\n";
    const int k = logits.shape().c;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto probs = nn::softmax({logits.sample(static_cast<int>(i)), static_cast<std::size_t>(k)});
      const int best = train::argmax(probs);
      char conf[32];
      std::snprintf(conf, sizeof(conf), "%.6f", probs[best]);
      csv += std::to_string(i) + "," + paths[i].string() + "," + clf.classes[best] + "," + conf + "\n";
    }
    if (out.empty()) {
      std::fputs(csv.c_str(), stdout);
      return;
    }
    ensure_parent(out);
    write_file(out, csv);
    Manifest m{sub, seed, {model}, {out}};
    m.inputs.push_back(frames.manifest.empty() ? frames.dir : frames.manifest);
    m.write(beside(out));
  }
};

struct CountCmd {
  CLI::App* sub;
  ArchOpts arch;
  std::string what = "conv";
  std::string truncate;
  std::string out;

  explicit CountCmd(CLI::App& app) {
    sub = app.add_subcommand("count-params", "Print the parameter count of an architecture");
    arch.add(sub, "baseline152");
    sub->add_option("--what", what, "conv: convolution weights; total: conv + bn + fc")
        ->check(CLI::IsMember({"conv", "total"}));
    sub->add_option("--truncate", truncate, "Count only the prefix up to this point")
        ->check(CLI::IsMember({"stem", "after-stage1", "after-stage2"}));
    sub->add_option("--out", out, "Also write the count to this file");
  }

  void run(std::uint64_t seed) {
    const auto spec = arch.resolve();
    std::int64_t n = 0;
    if (truncate.empty()) {
      n = what == "conv" ? arch::count_conv_params(spec) : arch::count_total_params(spec);
    } else {
      const auto p = arch::parse_truncation_point(truncate);
      n = what == "conv" ? arch::count_conv_params(spec, p) : arch::count_total_params(spec, p);
    }
    std::printf("%lld\n", static_cast<long long>(n));
    if (!out.empty()) {
      ensure_parent(out);
      write_file(out, std::to_string(n) + "\n");
      Manifest m{sub, seed, {}, {out}};
      m.write(beside(out));
    }
  }
};

struct BenchCmd {
  CLI::App* sub;
  std::vector<std::string> models;
  std::vector<std::string> zeroshots;
  std::string data_path, out, scope = "all";
  bench::BenchOptions bo;
  SplitOpts split;

  explicit BenchCmd(CLI::App& app) {
    sub = app.add_subcommand("bench", "Time forward passes and tabulate model costs");
    sub->add_option("--model", models, "Classifier checkpoint (repeatable)");
    sub->add_option("--zeroshot", zeroshots, "MODEL:PROTOTYPES pair (repeatable)");
    sub->add_option("--data", data_path)->required();
    sub->add_option("--scope", scope, "Frames to feed: all or the test split")
        ->check(CLI::IsMember({"all", "test"}));
    sub->add_option("--batch", bo.batch)->check(CLI::PositiveNumber);
    sub->add_option("--reps", bo.repetitions)->check(CLI::PositiveNumber);
    sub->add_option("--warmup", bo.warmup)->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", bo.threads, "Inference threads (default 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory");
    split.add(sub);
  }

  void run(std::uint64_t seed) {
    if (models.empty() && zeroshots.empty()) throw UsageError("give --model and/or --zeroshot");
    bo.scope = scope;
    const auto d = load_split(data_path, split);
    const data::FrameTensors frames = scope == "all" ? data::decode(d.set) : d.split.test;
    std::vector<bench::BenchReport> reports;
    Manifest m{sub, seed, {data_path}, {}};
    for (const auto& path : models) {
      const auto clf = train::Classifier::load(path);
      auto r = bench::bench_forward(bench::classifier_forward(clf), frames.images, frames.labels, bo);
      r.model = fs::path(path).stem().string();
      bench::fill_static(r, clf.net.spec(), bo.batch);
      reports.push_back(r);
      m.inputs.push_back(path);
    }
    for (const auto& pair : zeroshots) {
      const auto colon = pair.rfind(':');
      if (colon == std::string::npos) throw UsageError("--zeroshot expects MODEL:PROTOTYPES");
      const std::string model = pair.substr(0, colon), protos_path = pair.substr(colon + 1);
      const auto protos = zeroshot::PrototypeSet::load(protos_path);
      const auto clf = train::Classifier::load(model);
      const arch::ArchSpec spec = clf.net.spec();
      const auto ex = zeroshot::Extractor::from_classifier(train::Classifier::load(model), protos.point);
      auto r = bench::bench_forward(bench::prototype_forward(ex, protos), frames.images,
                                    frames.labels, bo);
      r.model = fs::path(protos_path).stem().string() + "@" + arch::to_string(protos.point);
      bench::fill_static(r, spec, protos.point, bo.batch);
      reports.push_back(r);
      m.inputs.push_back(model);
      m.inputs.push_back(protos_path);
    }
    std::string jsonl;
    for (const auto& r : reports) jsonl += r.json() + "\n";
    std::string text;
    if (reports.size() >= 2) {
      const auto table = bench::compare_report(reports);
      text = table.text;
      if (!out.empty()) {
        ensure_dir(out);
        write_file(fs::path(out) / "bench.csv", table.csv);
        write_file(fs::path(out) / "bench.txt", table.text);
        m.outputs.push_back((fs::path(out) / "bench.csv").string());
        m.outputs.push_back((fs::path(out) / "bench.txt").string());
      }
    } else {
      text = jsonl;
    }
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) {
      ensure_dir(out);
      write_file(fs::path(out) / "reports.jsonl", jsonl);
      m.outputs.push_back((fs::path(out) / "reports.jsonl").string());
      m.write(fs::path(out) / "run_manifest.json");
    }
  }
};

struct ExtractCmd {
  CLI::App* sub;
  std::string model, out, spans;
  FrameSource frames;
  int fps = 0;
  double threshold = 0.0;

  explicit ExtractCmd(CLI::App& app) {
    sub = app.add_subcommand("extract-log", "Turn a frame sequence into a JSONL event log");
    sub->add_option("--model", model)->required();
    sub->add_option("--out", out, "Per-frame records (JSON Lines)")->required();
    sub->add_option("--spans", spans, "Collapsed event spans (JSON Lines)");
    sub->add_option("--fps", fps, "Frame rate (default: the manifest's, else 30)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--threshold", threshold, "Minimum max-probability for a non-null event")
        ->check(CLI::NonNegativeNumber);
    frames.add(sub);
  }

  void run(std::uint64_t seed) {
    const auto clf = train::Classifier::load(model);
    int manifest_fps = 30;
    const auto paths = frames.paths(&manifest_fps);
    const int rate = fps > 0 ? fps : manifest_fps;
    const auto records = eventlog::extract_log(clf, paths, rate, threshold);
    ensure_parent(out);
    write_file(out, eventlog::to_jsonl(records));
    Manifest m{sub, seed, {model, frames.manifest.empty() ? frames.dir : frames.manifest}, {out}};
    if (!spans.empty()) {
      ensure_parent(spans);
      write_file(spans, eventlog::to_jsonl(eventlog::collapse(records, rate)));
      m.outputs.push_back(spans);
    }
    m.write(beside(out));
    log(Level::Info, "labeled " + std::to_string(records.size()) + " frames");
    std::printf("records=%zu\n", records.size());
  }
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ';');
  return s;
}

int fail(const std::string& kind, const std::string& msg, int code) {
  std::fflush(stdout);
  std::cerr << "error: kind=" << kind << " msg=" << one_line(msg) << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"framelog: gameplay-frame event classification toolkit", "framelog"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice of the run");
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>());
  app.allow_config_extras(CLI::config_extras_mode::ignore);

  SynthCmd synth(app);
  TrainCmd train_cmd(app);
  TransferCmd transfer(app);
  KnstCmd knst(app);
  ZsBuildCmd zs_build(app);
  ZsEvalCmd zs_eval(app);
  PredictCmd predict(app);
  CountCmd count(app);
  BenchCmd bench_cmd(app);
  ExtractCmd extract(app);
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (synth.sub->parsed()) synth.run(seed);
    else if (train_cmd.sub->parsed()) train_cmd.run(seed);
    else if (transfer.sub->parsed()) transfer.run(seed);
    else if (knst.sub->parsed()) knst.run(seed);
    else if (zs_build.sub->parsed()) zs_build.run(seed);
    else if (zs_eval.sub->parsed()) zs_eval.run(seed);
    else if (predict.sub->parsed()) predict.run(seed);
    else if (count.sub->parsed()) count.run(seed);
    else if (bench_cmd.sub->parsed()) bench_cmd.run(seed);
    else if (extract.sub->parsed()) extract.run(seed);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  std::fflush(stdout);
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace framelog::cli
