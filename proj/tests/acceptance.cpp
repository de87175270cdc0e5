// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance --tool PATH --work DIR [--gradcheck PATH] [--only 1,4,...] [--reuse]
//
// Most criteria drive the CLI the way a user would; invariants that have no
// CLI surface (single-step update norms, tie breaking) go through the library.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "framelog/arch.hpp"
#include "framelog/eventlog.hpp"
#include "framelog/synth.hpp"
#include "framelog/training.hpp"
#include "framelog/zeroshot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace framelog;

namespace {

std::string g_tool;
fs::path g_work;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out, err;
  double seconds = 0;
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Run tool(const std::string& args) {
  static int n = 0;
  const fs::path o = g_work / "_io" / ("o" + std::to_string(n));
  const fs::path e = g_work / "_io" / ("e" + std::to_string(n++));
  const auto t0 = Clock::now();
  const int rc = std::system((q(g_tool) + " " + args + " >" + q(o) + " 2>" + q(e)).c_str());
  Run r;
  r.seconds = since(t0);
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

// Throws with the command's stderr so a failing criterion says why.
Run must(const std::string& args) {
  Run r = tool(args);
  if (r.code != 0) throw std::runtime_error("`framelog " + args + "` exited " +
                                            std::to_string(r.code) + ": " + r.err);
  return r;
}

json summary(const fs::path& run_dir) { return json::parse(slurp(run_dir / "summary.json")); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- shared corpora and teacher ---------------------------------------------

fs::path target_data() {
  const fs::path d = g_work / "target";
  if (!fs::exists(d / "manifest.jsonl"))
    must("--seed 0 synth --task 0 --size 32 --clips 20 --frames 3 --out " + q(d));
  return d / "manifest.jsonl";
}

fs::path source_data() {
  const fs::path d = g_work / "source";
  if (!fs::exists(d / "manifest.jsonl"))
    must("--seed 5 synth --task 1 --size 32 --clips 200 --frames 1 --out " + q(d));
  return d / "manifest.jsonl";
}

fs::path teacher(const std::string& preset) {
  const fs::path d = g_work / ("teacher-" + preset);
  if (!fs::exists(d / "model.flog"))
    must("--seed 100 train --preset " + preset + " --data " + q(source_data()) +
         " --split-mode clip --epochs 10 --lr 1e-3 --out " + q(d));
  return d / "model.flog";
}

fs::path small_data() {
  const fs::path d = g_work / "small";
  if (!fs::exists(d / "manifest.jsonl"))
    must("--seed 2 synth --classes 3 --clips 3 --frames 2 --size 16 --out " + q(d));
  return d / "manifest.jsonl";
}

// Paired target runs used by transfer and pruning.
const std::string kTargetTrain = " --epochs 12 --lr 3e-4";

fs::path scratch_run(int seed) {
  const fs::path d = g_work / ("scratch-s" + std::to_string(seed));
  if (!fs::exists(d / "summary.json"))
    must("--seed " + std::to_string(seed) + " train --preset mini --data " + q(target_data()) +
         kTargetTrain + " --out " + q(d));
  return d;
}

// ---- criteria ----------------------------------------------------------------

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome c1_counts() {
  struct Want {
    std::string args;
    long long n;
  };
  const std::vector<Want> wants{
      {"--preset baseline152", 57992384},
      {"--preset baseline152 --depths 3,4,6,3 --p 0.3", 6573806},
      {"--preset baseline152 --depths 3,4,6,3 --p 0.5", 10287296},
      {"--preset baseline152 --depths 3,4,6,3 --p 0.7", 14847686},
  };
  Outcome o{true, ""};
  double slowest = 0;
  for (const auto& w : wants) {
    const Run r = must("count-params --what conv " + w.args);
    const long long got = std::stoll(r.out);
    slowest = std::max(slowest, r.seconds);
    o.detail += std::to_string(got) + (got == w.n ? " " : "(want " + std::to_string(w.n) + ") ");
    o.pass = o.pass && got == w.n && r.seconds < 1.0;
  }
  o.detail += "slowest " + fmt("%.3fs", slowest);
  return o;
}

Outcome c2_widths() {
  const std::map<double, std::array<int, 4>> want{
      {0.3, {19, 38, 76, 153}}, {0.5, {32, 64, 128, 256}}, {0.7, {44, 89, 179, 358}}};
  Outcome o{true, ""};
  int matched = 0;
  for (const auto& [p, w] : want) {
    const auto spec = arch::apply_prune_ratio(arch::preset("baseline152"), p);
    for (int s = 0; s < 4; ++s) {
      const int got = spec.inner_width(s);
      if (got == w[s]) ++matched;
      else o.detail += "p=" + fmt("%.1f", p) + " stage" + std::to_string(s) + " got " +
                       std::to_string(got) + " ";
    }
  }
  o.pass = matched == 12;
  o.detail += std::to_string(matched) + "/12 widths";
  return o;
}

Outcome c3_gradients(const std::string& gradcheck) {
  if (gradcheck.empty()) return {false, "no --gradcheck binary given"};
  const auto t0 = Clock::now();
  const int rc = std::system((q(gradcheck) + " >" + q(g_work / "_io" / "gradcheck.txt") + " 2>&1").c_str());
  const double s = since(t0);
  const std::string text = slurp(g_work / "_io" / "gradcheck.txt");
  const auto at = text.find("assertions:");
  std::string line = at == std::string::npos ? "" : text.substr(at, text.find('\n', at) - at);
  return {rc == 0 && s < 120.0, line + ", " + fmt("%.1fs", s)};
}

Outcome c4_standard() {
  const fs::path d = g_work / "standard";
  const auto t0 = Clock::now();
  must("--seed 1 train --preset mini --data " + q(target_data()) + " --epochs 30 --lr 3e-4 --out " +
       q(d));
  const double s = since(t0);
  const double acc = summary(d)["final_test_acc"];
  return {acc >= 0.90 && s < 600.0, "test_acc " + fmt("%.4f", acc) + " after 30 epochs, " +
                                        fmt("%.0fs", s)};
}

Outcome c5_transfer() {
  const fs::path t = teacher("mini");
  std::vector<double> ep_s, ep_t, acc_s, acc_t;
  std::string detail;
  for (int seed = 1; seed <= 3; ++seed) {
    const json s = summary(scratch_run(seed));
    const fs::path d = g_work / ("transfer-s" + std::to_string(seed));
    if (!fs::exists(d / "summary.json"))
      must("--seed " + std::to_string(seed) + " transfer --teacher " + q(t) + " --data " +
           q(target_data()) + kTargetTrain + " --out " + q(d));
    const json u = summary(d);
    // a run that never converged counts as one past the budget
    ep_s.push_back(s["converged_epoch"].is_null() ? 13 : s["converged_epoch"].get<double>());
    ep_t.push_back(u["converged_epoch"].is_null() ? 13 : u["converged_epoch"].get<double>());
    acc_s.push_back(s["final_test_acc"]);
    acc_t.push_back(u["final_test_acc"]);
    detail += "s" + std::to_string(seed) + " " + fmt("%.0f", ep_s.back()) + "/" +
              fmt("%.0f", ep_t.back()) + " ";
  }
  const double ms = median(ep_s), mt = median(ep_t);
  const double as = median(acc_s), at = median(acc_t);
  detail += "(scratch/student epochs); median " + fmt("%.1f", mt) + " vs " + fmt("%.1f", ms) +
            ", ratio " + fmt("%.3f", mt / ms) + "; test " + fmt("%.4f", at) + " vs " +
            fmt("%.4f", as);
  return {mt <= 0.5 * ms && at >= as - 0.02, detail};
}

double norm_diff(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(double(a[i]) - b[i], 2);
  return std::sqrt(s);
}

Outcome c6_knst() {
  const fs::path data = small_data();
  const fs::path a = g_work / "knst-plain", b = g_work / "knst-identity", c = g_work / "knst-live";
  must("--seed 3 train --data " + q(data) + " --epochs 2 --out " + q(a));
  must("--seed 3 knst --identity --data " + q(data) + " --epochs 2 --out " + q(b));
  const bool same = slurp(a / "model.flog") == slurp(b / "model.flog") &&
                    slurp(a / "curves.csv") == slurp(b / "curves.csv");

  // one live step, exactly one optimizer update
  data::SynthConfig sc;
  sc.classes = 3;
  sc.clips_per_class = 3;
  sc.frames_per_clip = 2;
  sc.height = sc.width = 16;
  const auto d = data::split(data::synth_tensors(sc), {});
  arch::ArchSpec spec = arch::preset("mini");
  spec.input_height = spec.input_width = 16;
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 3;
  cfg.batch_size = static_cast<int>(d.train.size());
  train::KnstOptions k;
  k.stylizer = {4, 2, 0.1f};
  k.style_image = d.train.images.slice_batch(0, 1);
  const auto r = train::train_knst(spec, d.train, d.test, cfg, k);
  spec.num_classes = 3;
  const auto init = model::ResNet::build(spec, cfg.seed);
  const auto st0 = train::Stylizer::build(k.stylizer, init.stem_kernel()->value.shape(),
                                          train::stylizer_seed(cfg.seed));
  double dc = 0, ds = 0;
  const auto before = init.state(), after = r.classifier.net.state();
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].first.find("running") != std::string::npos) continue;
    if (before[i].first == "stem.conv.weight") continue;
    dc += norm_diff(before[i].second, after[i].second);
  }
  for (const auto& [name, t] : st0.state()) {
    if (name.find("style_") != std::string::npos) continue;
    for (const auto& [n2, t2] : r.extras)
      if (n2 == name) ds += norm_diff(t, t2);
  }

  must("--seed 3 knst --data " + q(data) + " --epochs 2 --out " + q(c));
  const std::string curves = slurp(c / "curves.csv");
  const bool emitted = curves.rfind("epoch,", 0) == 0 &&
                       std::count(curves.begin(), curves.end(), '\n') == 3;
  return {same && dc > 0 && ds > 0 && emitted,
          std::string("identity bitwise ") + (same ? "yes" : "no") + "; update norms classifier " +
              fmt("%.3g", dc) + " stylizer " + fmt("%.3g", ds) + "; curves " +
              (emitted ? "emitted" : "missing")};
}

Outcome c7_zeroshot() {
  const fs::path t = teacher("mini");
  const fs::path dir = g_work / "zeroshot";
  const fs::path protos = dir / "stem.flog";
  must("zeroshot-build --model " + q(t) + " --data " + q(target_data()) + " --truncate stem --out " +
       q(protos));
  must("zeroshot-eval --model " + q(t) + " --prototypes " + q(protos) + " --data " +
       q(target_data()) + " --out " + q(dir / "eval.json"));
  const double acc = json::parse(slurp(dir / "eval.json"))["accuracy"];

  // self-consistency: the file holds the class means of the train split, and
  // a class's only exemplar sits at distance 0 from its own prototype
  const auto ex = zeroshot::Extractor::from_classifier(train::Classifier::load(t),
                                                       arch::TruncationPoint::Stem);
  const auto loaded = zeroshot::PrototypeSet::load(protos);
  const auto set = data::load_manifest(target_data());
  const auto split = data::split(data::decode(set), {});
  const auto rebuilt = zeroshot::build_prototypes(ex, split.train);
  bool consistent = rebuilt.prototypes.size() == loaded.prototypes.size();
  for (std::size_t k = 0; consistent && k < loaded.prototypes.size(); ++k) {
    const auto a = loaded.prototypes[k].mean.values(), b = rebuilt.prototypes[k].mean.values();
    consistent = std::equal(a.begin(), a.end(), b.begin(), b.end());
  }
  data::FrameTensors one;
  {
    std::vector<int> pick;
    std::set<int> seen;
    for (int i = 0; i < split.train.size(); ++i)
      if (seen.insert(split.train.labels[i]).second) pick.push_back(i);
    one = split.train.subset(pick);
  }
  const auto own = zeroshot::build_prototypes(ex, one);
  for (int i = 0; i < one.size(); ++i) {
    const auto p = zeroshot::zs_predict(ex, own, one.images.slice_batch(i, 1));
    consistent = consistent && p.label == one.labels[i] && p.distances[p.label] == 0.0;
  }

  // ties go to the lowest index, and a shared offset does not move the argmin
  zeroshot::PrototypeSet tie;
  for (int k = 0; k < 3; ++k) {
    tie.classes.push_back("c" + std::to_string(k));
    tie.prototypes.push_back({k, nn::Tensor({1, 4, 1, 1}, k == 1 ? 0.0f : 2.0f), 1});
  }
  const std::vector<float> f(4, 1.0f);  // equidistant from all three
  bool ties = zeroshot::nearest(tie, f).label == 0;
  for (auto& pr : tie.prototypes)
    for (float& v : pr.mean.values()) v += 5.0f;
  const std::vector<float> g(4, 6.0f);
  ties = ties && zeroshot::nearest(tie, g).label == 0;

  const fs::path bench_dir = dir / "bench";
  must("bench --model " + q(t) + " --zeroshot " + q(t) + ":" + q(protos) + " --data " +
       q(target_data()) + " --reps 2 --out " + q(bench_dir));
  std::vector<double> total;
  std::istringstream lines(slurp(bench_dir / "reports.jsonl"));
  for (std::string line; std::getline(lines, line);)
    if (!line.empty()) total.push_back(json::parse(line)["total_s"]);
  const bool faster = total.size() == 2 && total[1] < total[0];

  return {acc >= 0.2 && consistent && ties && faster,
          "accuracy " + fmt("%.4f", acc) + "; self-consistent " + (consistent ? "yes" : "no") +
              "; ties " + (ties ? "ok" : "broken") + "; bench full " +
              (total.size() > 0 ? fmt("%.3fs", total[0]) : "?") + " stem " +
              (total.size() > 1 ? fmt("%.3fs", total[1]) : "?")};
}

Outcome c8_pruned() {
  const fs::path t = teacher("mini-thinet50");
  const fs::path d = g_work / "pruned-student";
  if (!fs::exists(d / "summary.json"))
    must("--seed 1 transfer --teacher " + q(t) + " --data " + q(target_data()) + kTargetTrain +
         " --out " + q(d));
  const double student = summary(d)["final_test_acc"];
  const double scratch = summary(scratch_run(1))["final_test_acc"];

  const long long pruned = std::stoll(must("count-params --preset mini-thinet50").out);
  const long long full = std::stoll(must("count-params --preset mini").out);

  bool monotone = true;
  for (const std::string base : {"", "mini-"}) {
    const int hw = base.empty() ? 224 : 32;
    long long prev = 0;
    for (const std::string name : {"thinet30", "thinet50", "thinet70"}) {
      const std::string preset = base + name;
      const long long m = arch::estimate_memory(arch::preset(preset), 3, hw, hw, 16).total_bytes();
      monotone = monotone && m > prev;
      prev = m;
    }
    const long long top =
        arch::estimate_memory(arch::preset(base.empty() ? "baseline152" : "mini"), 3, hw, hw, 16)
            .total_bytes();
    monotone = monotone && top > prev;
  }
  return {student >= scratch - 0.02 && pruned < full && monotone,
          "student test " + fmt("%.4f", student) + " vs scratch " + fmt("%.4f", scratch) +
              "; conv params " + std::to_string(pruned) + " < " + std::to_string(full) +
              "; memory monotone " + (monotone ? "yes" : "no")};
}

Outcome c9_determinism() {
  const fs::path data = small_data();
  const fs::path root = g_work / "determinism";
  std::vector<std::string> differ;
  auto same = [&](const fs::path& a, const fs::path& b) {
    if (!fs::exists(a) || slurp(a) != slurp(b)) differ.push_back(a.filename().string());
  };
  auto replay = [&](const fs::path& manifest, const std::string& sub, const fs::path& out) {
    must("--config " + q(manifest) + " " + sub + " --out " + q(out));
  };

  const fs::path s1 = root / "synth1", s2 = root / "synth2";
  const Run a = must("--seed 9 synth --classes 3 --clips 2 --frames 2 --size 16 --out " + q(s1));
  const Run b = must("--config " + q(s1 / "run_manifest.json") + " synth --out " + q(s2));
  if (a.out != b.out) differ.push_back("synth dataset_hash");

  const fs::path t1 = root / "train1", t2 = root / "train2";
  must("--seed 4 train --data " + q(data) + " --epochs 2 --out " + q(t1));
  replay(t1 / "run_manifest.json", "train", t2);
  for (const char* f : {"model.flog", "curves.csv", "summary.json"}) same(t1 / f, t2 / f);

  const fs::path u1 = root / "transfer1", u2 = root / "transfer2";
  must("--seed 5 transfer --teacher " + q(t1 / "model.flog") + " --data " + q(data) +
       " --epochs 2 --out " + q(u1));
  replay(u1 / "run_manifest.json", "transfer", u2);
  for (const char* f : {"model.flog", "curves.csv"}) same(u1 / f, u2 / f);

  const fs::path k1 = root / "knst1", k2 = root / "knst2";
  must("--seed 6 knst --data " + q(data) + " --epochs 2 --out " + q(k1));
  replay(k1 / "run_manifest.json", "knst", k2);
  for (const char* f : {"model.flog", "curves.csv"}) same(k1 / f, k2 / f);

  const fs::path p1 = root / "protos1.flog", p2 = root / "protos2.flog";
  must("zeroshot-build --model " + q(t1 / "model.flog") + " --data " + q(data) + " --out " + q(p1));
  replay(fs::path(p1.string() + ".run.json"), "zeroshot-build", p2);
  same(p1, p2);
  same(zeroshot::PrototypeSet::sidecar_path(p1), zeroshot::PrototypeSet::sidecar_path(p2));

  const fs::path l1 = root / "log1.jsonl", l2 = root / "log2.jsonl";
  must("extract-log --model " + q(t1 / "model.flog") + " --data " + q(data) + " --out " + q(l1));
  replay(fs::path(l1.string() + ".run.json"), "extract-log", l2);
  same(l1, l2);

  std::string detail = "synth, train, transfer, knst, zeroshot-build, extract-log replayed";
  if (!differ.empty()) {
    detail += "; differ:";
    for (const auto& d : differ) detail += " " + d;
  }
  return {differ.empty(), detail};
}

Outcome c10_end_to_end() {
  const auto t0 = Clock::now();
  const fs::path root = g_work / "e2e";
  const fs::path data = root / "frames";
  must("--seed 7 synth --size 32 --clips 2 --frames 6 --out " + q(data));
  must("--seed 7 train --data " + q(data / "manifest.jsonl") + " --epochs 8 --out " + q(root / "model"));
  const auto set = data::load_manifest(data / "manifest.jsonl");
  const std::size_t frames = set.frames.size();

  bool valid = true, reconstruct = true, monotone = true;
  std::vector<std::size_t> nulls;
  const std::vector<std::string> taus{"0", "0.5", "0.9", "1.01"};
  for (const auto& tau : taus) {
    const fs::path log = root / ("log_" + tau + ".jsonl"), spans = root / ("spans_" + tau + ".jsonl");
    must("extract-log --model " + q(root / "model" / "model.flog") + " --data " +
         q(data / "manifest.jsonl") + " --threshold " + tau + " --out " + q(log) + " --spans " +
         q(spans));
    std::size_t count = 0, null_count = 0;
    std::istringstream in(slurp(log));
    for (std::string line; std::getline(in, line);) {
      try {
        const json j = json::parse(line);
        valid = valid && j.contains("frame_index") && j.contains("timestamp_s") &&
                j.contains("event") && j.contains("confidence");
        null_count += j["event"].is_null();
        ++count;
      } catch (const json::exception&) {
        valid = false;
      }
    }
    valid = valid && count == frames;
    nulls.push_back(null_count);
    const auto records = eventlog::parse_records(slurp(log));
    const auto collapsed = eventlog::parse_spans(slurp(spans));
    reconstruct = reconstruct && eventlog::expand(collapsed, set.fps) == eventlog::non_null(records);
  }
  for (std::size_t i = 1; i < nulls.size(); ++i) monotone = monotone && nulls[i] >= nulls[i - 1];
  monotone = monotone && nulls.front() == 0 && nulls.back() == frames;
  const double s = since(t0);

  std::string counts;
  for (std::size_t i = 0; i < taus.size(); ++i)
    counts += (i ? "," : "") + std::to_string(nulls[i]);
  return {valid && reconstruct && monotone && s < 900.0,
          std::to_string(frames) + " frames, records " + (valid ? "valid" : "INVALID") +
              "; nulls at tau 0/0.5/0.9/1.01: " + counts + "; spans reconstruct " +
              (reconstruct ? "yes" : "no") + "; " + fmt("%.0fs", s)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::string work, gradcheck, only;
  app.add_option("--tool", g_tool)->required();
  app.add_option("--work", work)->required();
  app.add_option("--gradcheck", gradcheck);
  app.add_option("--only", only, "Comma-separated criteria to run");
  bool reuse = false;
  app.add_flag("--reuse", reuse, "Keep corpora and runs left in --work by an earlier run");
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  if (!reuse) fs::remove_all(g_work);
  fs::create_directories(g_work / "_io");

  std::set<int> wanted;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) wanted.insert(std::stoi(item));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter counts", c1_counts},
      {"pruned widths", c2_widths},
      {"gradient suite", [&] { return c3_gradients(gradcheck); }},
      {"standard training", c4_standard},
      {"transfer speedup", c5_transfer},
      {"knst mechanics", c6_knst},
      {"zero-shot", c7_zeroshot},
      {"pruned training", c8_pruned},
      {"determinism", c9_determinism},
      {"end to end", c10_end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-18s %s  %s  [%.0fs]\n", id, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
