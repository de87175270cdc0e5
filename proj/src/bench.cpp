#include "framelog/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <thread>

#include "framelog/error.hpp"

namespace framelog::bench {
namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<int> run_batch(const ForwardFn& fn, const nn::Tensor& batch, int threads) {
  const int n = batch.shape().n;
  if (threads <= 1 || n < 2) return fn(batch);
  const int parts = std::min(threads, n);
  std::vector<std::vector<int>> out(parts);
  std::vector<std::thread> pool;
  int start = 0;
  for (int t = 0; t < parts; ++t) {
    const int count = n / parts + (t < n % parts ? 1 : 0);
    pool.emplace_back([&, t, start, count] { out[t] = fn(batch.slice_batch(start, count)); });
    start += count;
  }
  for (auto& th : pool) th.join();
  std::vector<int> merged;
  for (auto& o : out) merged.insert(merged.end(), o.begin(), o.end());
  return merged;
}

}  // namespace

double monotonic_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValueError("percentile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw ValueError("percentile rank must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * values.size() - 1e-9));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

BenchReport bench_forward(const ForwardFn& fn, const nn::Tensor& frames,
                          std::span<const int> labels, const BenchOptions& opts) {
  const int n = frames.empty() ? 0 : frames.shape().n;
  if (n == 0) throw ValueError("cannot benchmark an empty dataset");
  if (opts.repetitions < 1) throw ValueError("repetitions must be >= 1");
  if (opts.warmup < 0) throw ValueError("warmup must be >= 0");
  if (opts.batch < 1) throw ValueError("batch must be >= 1");
  if (opts.threads < 1) throw ValueError("threads must be >= 1");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("labels do not match frame count");
  }
  const Clock clock = opts.clock ? opts.clock : Clock(monotonic_seconds);

  std::vector<nn::Tensor> batches;
  for (int start = 0; start < n; start += opts.batch) {
    batches.push_back(frames.slice_batch(start, std::min(opts.batch, n - start)));
  }
  for (int w = 0; w < opts.warmup; ++w) {
    for (const auto& b : batches) run_batch(fn, b, opts.threads);
  }

  BenchReport r;
  std::vector<double> per_frame;
  std::vector<int> predictions;
  for (int rep = 0; rep < opts.repetitions; ++rep) {
    predictions.clear();
    for (const auto& b : batches) {
      const double t0 = clock();
      const auto pred = run_batch(fn, b, opts.threads);
      const double dt = clock() - t0;
      r.total_s += dt;
      per_frame.push_back(dt / b.shape().n);
      predictions.insert(predictions.end(), pred.begin(), pred.end());
    }
  }
  r.frames = static_cast<std::int64_t>(n) * opts.repetitions;
  r.per_frame_mean_s = r.total_s / static_cast<double>(r.frames);
  r.per_frame_p50_s = percentile(per_frame, 0.5);
  r.per_frame_p95_s = percentile(per_frame, 0.95);
  r.batch = opts.batch;
  r.repetitions = opts.repetitions;
  r.threads = opts.threads;
  r.scope = opts.scope;
  if (opts.threads > 1) {
    r.note = std::to_string(opts.threads) +
             " inference threads; timings are not comparable with single-threaded runs";
  }
  if (!labels.empty() && predictions.size() == labels.size()) {
    int correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    r.accuracy = static_cast<double>(correct) / labels.size();
  }
  return r;
}

ForwardFn classifier_forward(const train::Classifier& clf) {
  return [&clf](const nn::Tensor& batch) {
    const nn::Tensor logits = clf.logits(batch);
    std::vector<int> out;
    const int k = logits.shape().c;
    for (int i = 0; i < logits.shape().n; ++i) {
      out.push_back(train::argmax({logits.sample(i), static_cast<std::size_t>(k)}));
    }
    return out;
  };
}

ForwardFn prototype_forward(const zeroshot::Extractor& ex, const zeroshot::PrototypeSet& protos) {
  return [&ex, &protos](const nn::Tensor& batch) {
    const nn::Tensor f = ex.extract(batch);
    std::vector<int> out;
    for (int i = 0; i < f.shape().n; ++i) {
      out.push_back(zeroshot::nearest(protos, {f.sample(i), f.sample_size()}).label);
    }
    return out;
  };
}

void fill_static(BenchReport& r, const arch::ArchSpec& spec, int batch) {
  r.conv_params = arch::count_conv_params(spec);
  r.total_params = arch::count_total_params(spec);
  r.memory_bytes = arch::estimate_memory(spec, spec.input_channels, spec.input_height,
                                         spec.input_width, batch)
                       .total_bytes();
}

void fill_static(BenchReport& r, const arch::ArchSpec& spec, arch::TruncationPoint point,
                 int batch) {
  r.conv_params = arch::count_conv_params(spec, point);
  r.total_params = arch::count_total_params(spec, point);
  r.memory_bytes = arch::estimate_memory(spec, point, spec.input_channels, spec.input_height,
                                         spec.input_width, batch)
                       .total_bytes();
}

std::string BenchReport::json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["frames"] = frames;
  j["total_s"] = total_s;
  j["per_frame_mean_s"] = per_frame_mean_s;
  j["per_frame_p50_s"] = per_frame_p50_s;
  j["per_frame_p95_s"] = per_frame_p95_s;
  j["batch"] = batch;
  j["repetitions"] = repetitions;
  j["threads"] = threads;
  j["scope"] = scope;
  j["accuracy"] = accuracy ? nlohmann::ordered_json(*accuracy) : nlohmann::ordered_json(nullptr);
  j["conv_params"] = conv_params;
  j["total_params"] = total_params;
  j["memory_bytes"] = memory_bytes;
  j["note"] = note;
  return j.dump();
}

ComparisonTable compare_report(std::span<const BenchReport> reports) {
  if (reports.size() < 2) throw ValueError("compare_report needs at least two reports");
  ComparisonTable t;
  t.csv =
      "model,parameters,total_parameters,memory_bytes,time_s,per_frame_s,p50_s,p95_s,accuracy,"
      "frames,batch,scope,threads\n";
  std::vector<std::array<std::string, 6>> rows;
  rows.push_back({"Model", "Parameters", "Memory (MB)", "Time (s)", "Per frame (s)", "Accuracy"});
  for (const auto& r : reports) {
    const std::string acc = r.accuracy ? fmt("%.4f", *r.accuracy) : "";
    t.csv += r.model + "," + std::to_string(r.conv_params) + "," + std::to_string(r.total_params) +
             "," + std::to_string(r.memory_bytes) + "," + fmt("%.6f", r.total_s) + "," +
             fmt("%.6g", r.per_frame_mean_s) + "," + fmt("%.6g", r.per_frame_p50_s) + "," +
             fmt("%.6g", r.per_frame_p95_s) + "," + acc + "," + std::to_string(r.frames) + "," +
             std::to_string(r.batch) + "," + r.scope + "," + std::to_string(r.threads) + "\n";
    rows.push_back({r.model, std::to_string(r.conv_params),
                    fmt("%.2f", static_cast<double>(r.memory_bytes) / (1024.0 * 1024.0)),
                    fmt("%.3f", r.total_s), fmt("%.5f", r.per_frame_mean_s),
                    acc.empty() ? "-" : fmt("%.2f%%", *r.accuracy * 100.0)});
  }
  std::array<std::size_t, 6> width{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const std::string& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      // first column left-aligned, numbers right-aligned
      line += c == 0 ? cell + pad : "  " + pad + cell;
    }
    t.text += line + "\n";
    if (i == 0) {
      std::size_t total = width[0];
      for (std::size_t c = 1; c < width.size(); ++c) total += 2 + width[c];
      t.text += std::string(total, '-') + "\n";
    }
  }
  return t;
}

}  // namespace framelog::bench
