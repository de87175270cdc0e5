#include "framelog/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "framelog/error.hpp"
#include "framelog/ops.hpp"

namespace framelog::train {
namespace {

using nn::Tensor;
using nn::Var;

constexpr int kEvalChunk = 64;

Tensor logits_of(const model::ResNet& net, const Tensor& x, const model::ForwardOptions& opts) {
  const int n = x.shape().n;
  Tensor out;
  for (int start = 0; start < n; start += kEvalChunk) {
    const int count = std::min(kEvalChunk, n - start);
    const Tensor part = net.forward_eval(nn::constant(x.slice_batch(start, count)), opts)->value;
    if (start == 0) {
      nn::Shape s = part.shape();
      s.n = n;
      out = Tensor(s);
    }
    std::copy(part.values().begin(), part.values().end(), out.sample(start));
  }
  return out;
}

void check_classes(const data::FrameTensors& train, const data::FrameTensors& test) {
  if (train.size() == 0) throw ValueError("training split is empty");
  if (test.size() == 0) throw ValueError("test split is empty");
  if (train.classes != test.classes) throw ValueError("train and test splits list different classes");
  std::vector<int> counts(train.classes.size(), 0);
  for (int l : train.labels) ++counts.at(l);
  std::string missing;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) missing += (missing.empty() ? "" : ", ") + train.classes[k];
  }
  if (!missing.empty()) throw ValueError("no training frames for class(es): " + missing);
}

// Fisher-Yates with raw engine draws so the order is identical across
// standard library implementations.
void shuffle(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

struct FitInput {
  model::ResNet net;
  Stylizer* stylizer = nullptr;
  const Tensor* style_image = nullptr;
};

TrainResult fit(FitInput in, const data::FrameTensors& train, const data::FrameTensors& test,
                const TrainConfig& cfg) {
  cfg.validate();
  check_classes(train, test);
  model::ResNet& net = in.net;
  if (net.spec().num_classes != static_cast<int>(train.classes.size())) {
    throw ValueError("model head has " + std::to_string(net.spec().num_classes) +
                     " outputs but the data has " + std::to_string(train.classes.size()) +
                     " classes");
  }
  const data::Normalizer norm = data::Normalizer::fit(train.images);
  const Tensor xtrain = norm.apply(train.images);
  const Tensor xtest = norm.apply(test.images);

  Stylizer* st = in.stylizer;
  const bool live = st != nullptr && !st->is_identity();
  if (live) st->set_style(norm.apply(*in.style_image));

  std::vector<Var> params = cfg.freeze_backbone ? net.head_parameters() : net.parameters();
  const std::vector<Var> frozen = cfg.freeze_backbone ? net.backbone_parameters() : std::vector<Var>{};
  for (const Var& p : frozen) p->requires_grad = false;
  if (live) {
    for (const Var& p : st->parameters()) params.push_back(p);
  }

  nn::AdamState adam{cfg.adam, 0, {}, {}};
  std::mt19937_64 rng(cfg.seed ^ 0x2545f4914f6cdd1dull);
  std::vector<int> order(train.size());
  for (int i = 0; i < train.size(); ++i) order[i] = i;

  Curves curves;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    int correct = 0;
    try {
      for (int start = 0; start < train.size(); start += cfg.batch_size) {
        const int count = std::min(cfg.batch_size, train.size() - start);
        const std::span<const int> idx(order.data() + start, count);
        std::vector<int> targets;
        for (int i : idx) targets.push_back(train.labels[i]);

        nn::Tape tape;
        model::ForwardOptions opts;
        if (st != nullptr) opts.stem_kernel = st->apply(&tape, net.stem_kernel());
        const Var logits = net.forward(&tape, nn::constant(xtrain.gather_batch(idx)),
                                       nn::Mode::Train, opts);
        const nn::XentResult xent = nn::softmax_xent(&tape, logits, targets);
        const double loss = xent.loss->value[0];
        if (!std::isfinite(loss)) {
          throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
        }
        tape.backward(xent.loss);
        nn::adam_step(params, adam);
        nn::zero_grads(params);

        loss_sum += loss * count;
        const int k = xent.probs.shape().c;
        for (int b = 0; b < count; ++b) {
          if (argmax({xent.probs.sample(b), static_cast<std::size_t>(k)}) == targets[b]) ++correct;
        }
      }
    } catch (const DivergenceError&) {
      throw;
    } catch (const ValueError& e) {
      // non-finite activations or gradients
      throw DivergenceError(epoch, "diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }

    model::ForwardOptions eval_opts;
    if (live) eval_opts.stem_kernel = st->apply(nullptr, net.stem_kernel());
    const Evaluation ev = evaluate_logits(logits_of(net, xtest, eval_opts), test.labels);
    if (!std::isfinite(ev.loss)) {
      throw DivergenceError(epoch, "non-finite test loss at epoch " + std::to_string(epoch));
    }
    curves.records.push_back({epoch, loss_sum / train.size(),
                                     static_cast<double>(correct) / train.size(), ev.loss,
                                     ev.accuracy});
    if (cfg.on_epoch) cfg.on_epoch(curves.records.back());
  }
  for (const Var& p : frozen) p->requires_grad = true;

  std::vector<std::pair<std::string, Tensor>> extras;
  if (live) {
    extras = st->state();
    extras.emplace_back("stylizer.source_kernel", net.stem_kernel()->value);
    // the saved classifier carries the kernel it was evaluated with
    net.stem_kernel()->value = st->apply(nullptr, net.stem_kernel())->value;
  }
  const auto converged = detect_convergence(curves, cfg.threshold, cfg.patience);
  return TrainResult{Classifier{std::move(net), norm, train.classes}, std::move(curves), converged,
                     std::move(extras)};
}

arch::ArchSpec with_classes(arch::ArchSpec spec, const data::FrameTensors& train) {
  spec.num_classes = static_cast<int>(train.classes.size());
  return spec;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValueError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ValueError("batch size must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValueError("threshold must lie in [0, 1]");
  if (patience < 1) throw ValueError("patience must be >= 1");
  if (!(adam.lr > 0.0f)) throw ValueError("learning rate must be positive");
}

std::string Curves::csv() const {
  std::string out = "epoch,train_loss,train_acc,test_loss,test_acc\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_acc,
                  r.test_loss, r.test_acc);
    out += buf;
  }
  return out;
}

Curves Curves::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,test_loss,test_acc") {
    throw FormatError("curves CSV: unexpected header");
  }
  Curves c;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.train_acc,
                    &r.test_loss, &r.test_acc) != 5) {
      throw FormatError("curves CSV line " + std::to_string(lineno) + ": malformed record");
    }
    if (!c.records.empty() && r.epoch <= c.records.back().epoch) {
      throw FormatError("curves CSV line " + std::to_string(lineno) + ": epochs must increase");
    }
    c.records.push_back(r);
  }
  return c;
}

std::vector<double> Curves::train_acc() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.train_acc);
  return out;
}

std::optional<int> detect_convergence(std::span<const double> acc, double threshold, int patience) {
  if (patience < 1) throw ValueError("patience must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    run = acc[i] >= threshold ? run + 1 : 0;
    if (run == patience) return static_cast<int>(i) - patience + 2;
  }
  return std::nullopt;
}

std::optional<int> detect_convergence(const Curves& curves, double threshold, int patience) {
  const auto acc = curves.train_acc();
  return detect_convergence(acc, threshold, patience);
}

int argmax(std::span<const float> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

Evaluation evaluate_logits(const Tensor& logits, std::span<const int> labels) {
  const nn::Shape s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("logits must be (N, K, 1, 1), got " + s.str());
  if (static_cast<std::size_t>(s.n) != labels.size()) {
    throw ShapeError("got " + std::to_string(s.n) + " logit rows for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (s.n == 0) throw ValueError("cannot evaluate an empty set");
  Evaluation ev;
  ev.confusion.assign(s.c, std::vector<int>(s.c, 0));
  double loss = 0.0;
  int correct = 0;
  for (int i = 0; i < s.n; ++i) {
    if (labels[i] < 0 || labels[i] >= s.c) {
      throw ValueError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(s.c) + ")");
    }
    const std::span<const float> row(logits.sample(i), s.c);
    loss += nn::softmax_xent(row, labels[i]).first;
    const int pred = argmax(row);
    ++ev.confusion[labels[i]][pred];
    if (pred == labels[i]) ++correct;
  }
  ev.loss = loss / s.n;
  ev.accuracy = static_cast<double>(correct) / s.n;
  return ev;
}

Tensor Classifier::logits(const Tensor& images) const {
  return logits_of(net, norm.apply(images), {});
}

Checkpoint Classifier::to_checkpoint() const {
  Checkpoint ck;
  nlohmann::ordered_json meta;
  meta["kind"] = "classifier";
  meta["arch"] = arch::to_config(net.spec());
  meta["classes"] = classes;
  ck.metadata = meta.dump();
  for (auto& [name, t] : net.state()) ck.add(name, t);
  ck.add("norm.mean", norm.mean_tensor());
  ck.add("norm.std", norm.stddev_tensor());
  return ck;
}

Classifier Classifier::from_checkpoint(const Checkpoint& ck) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!meta.contains("arch") || !meta["arch"].is_string() || !meta.contains("classes")) {
    throw FormatError("checkpoint metadata lacks arch/classes; not a classifier checkpoint");
  }
  const arch::ArchSpec spec = arch::parse_config(meta["arch"].get<std::string>());
  auto classes = meta["classes"].get<std::vector<std::string>>();
  if (static_cast<int>(classes.size()) != spec.num_classes) {
    throw FormatError("checkpoint lists " + std::to_string(classes.size()) +
                      " classes for a head of " + std::to_string(spec.num_classes));
  }
  model::ResNet net = model::ResNet::build(spec, 0);
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (const auto& [name, t] : net.state()) {
    if (!ck.has(name)) throw FormatError("checkpoint is missing tensor '" + name + "'");
    tensors.emplace_back(name, ck.get(name));
  }
  net.load_state(tensors);
  if (!ck.has("norm.mean") || !ck.has("norm.std")) {
    throw FormatError("checkpoint is missing normalizer tensors");
  }
  auto norm = data::Normalizer::from_tensors(ck.get("norm.mean"), ck.get("norm.std"));
  return Classifier{std::move(net), std::move(norm), std::move(classes)};
}

Classifier Classifier::load(const std::filesystem::path& path) {
  return from_checkpoint(Checkpoint::load(path));
}

Evaluation evaluate(const Classifier& clf, const data::FrameTensors& set) {
  if (set.classes != clf.classes) {
    throw ValueError("dataset classes do not match the classifier's " +
                     std::to_string(clf.classes.size()) + " classes");
  }
  return evaluate_logits(clf.logits(set.images), set.labels);
}

Checkpoint TrainResult::checkpoint() const {
  Checkpoint ck = classifier.to_checkpoint();
  for (const auto& [name, t] : extras) ck.add(name, t);
  return ck;
}

TrainResult train_standard(const arch::ArchSpec& spec, const data::FrameTensors& train,
                           const data::FrameTensors& test, const TrainConfig& cfg) {
  cfg.validate();
  return fit({model::ResNet::build(with_classes(spec, train), cfg.seed)}, train, test, cfg);
}

model::ResNet transfer_init(const Checkpoint& teacher, const arch::ArchSpec& spec,
                            int num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ValueError("num_classes must be >= 1");
  arch::ArchSpec s = spec;
  s.num_classes = num_classes;
  model::ResNet net = model::ResNet::build(s, seed);
  std::vector<std::pair<std::string, Tensor>> copied;
  std::string bad;
  for (const auto& [name, t] : net.state()) {
    if (name.rfind("fc.", 0) == 0) continue;
    if (!teacher.has(name)) {
      bad += "\n  " + name + ": missing in teacher (student " + t.shape().str() + ")";
    } else if (!(teacher.get(name).shape() == t.shape())) {
      bad += "\n  " + name + ": teacher " + teacher.get(name).shape().str() + " vs student " +
             t.shape().str();
    } else {
      copied.emplace_back(name, teacher.get(name));
    }
  }
  if (!bad.empty()) throw ShapeError("teacher backbone does not fit the student:" + bad);
  net.load_state(copied);
  return net;
}

TrainResult train_transfer(const Checkpoint& teacher, const arch::ArchSpec& spec,
                           const data::FrameTensors& train, const data::FrameTensors& test,
                           const TrainConfig& cfg) {
  cfg.validate();
  return fit({transfer_init(teacher, spec, static_cast<int>(train.classes.size()), cfg.seed)},
             train, test, cfg);
}

std::uint64_t stylizer_seed(std::uint64_t seed) { return seed ^ 0x6a09e667f3bcc909ull; }

TrainResult train_knst(const arch::ArchSpec& spec, const data::FrameTensors& train,
                       const data::FrameTensors& test, const TrainConfig& cfg,
                       const KnstOptions& knst) {
  cfg.validate();
  model::ResNet net = model::ResNet::build(with_classes(spec, train), cfg.seed);
  const nn::Shape kshape = net.stem_kernel()->value.shape();
  Stylizer st = knst.identity
                    ? Stylizer::identity(kshape)
                    : Stylizer::build(knst.stylizer, kshape, stylizer_seed(cfg.seed));
  if (!knst.identity && knst.style_image.empty()) {
    throw ValueError("KNST needs a style image");
  }
  return fit({std::move(net), &st, &knst.style_image}, train, test, cfg);
}

}  // namespace framelog::train
