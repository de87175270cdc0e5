#include <doctest.h>

#include <cmath>
#include <random>

#include "framelog/adam.hpp"
#include "framelog/error.hpp"
#include "framelog/ops.hpp"

using namespace framelog;
using namespace framelog::nn;

namespace {

Tensor randn(std::mt19937_64& rng, Shape s) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  Tensor t(s);
  for (float& v : t.values()) v = d(rng);
  return t;
}

// Direct-loop cross-correlation, zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& k, int stride, int pad) {
  const Shape xs = x.shape(), ks = k.shape();
  const int oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  Tensor y({xs.n, ks.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ks.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = 0;
          for (int c = 0; c < xs.c; ++c)
            for (int a = 0; a < ks.h; ++a)
              for (int b = 0; b < ks.w; ++b) {
                const int yy = i * stride - pad + a, xx = j * stride - pad + b;
                if (yy < 0 || yy >= xs.h || xx < 0 || xx >= xs.w) continue;
                acc += static_cast<double>(x.at(n, c, yy, xx)) * k.at(o, c, a, b);
              }
          y.at(n, o, i, j) = static_cast<float>(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("shape and tensor basics") {
  const Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.plane() == 20);
  Tensor t(s, 1.5f);
  CHECK(t.size() == 120);
  CHECK(t.sample_size() == 60);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  const Tensor b = t.slice_batch(1, 1);
  CHECK(b.shape() == Shape{1, 3, 4, 5});
  CHECK(b[59] == 7.0f);
  const std::vector<int> idx{1, 0, 1};
  CHECK(t.gather_batch(idx).shape().n == 3);
  CHECK_THROWS_AS(t.reshaped({1, 1, 1, 7}), ShapeError);
}

TEST_CASE("require_finite rejects NaN and infinity") {
  Tensor t({1, 1, 1, 2});
  CHECK_NOTHROW(require_finite(t, "t"));
  t[1] = std::nanf("");
  CHECK_THROWS_AS(require_finite(t, "t"), ValueError);
  t[1] = INFINITY;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("stack joins single samples") {
  std::vector<Tensor> parts{Tensor({1, 2, 2, 2}, 1.0f), Tensor({1, 2, 2, 2}, 2.0f)};
  const Tensor s = stack(parts);
  CHECK(s.shape() == Shape{2, 2, 2, 2});
  CHECK(s[8] == 2.0f);
  parts.push_back(Tensor({1, 1, 2, 2}));
  CHECK_THROWS_AS(stack(parts), ShapeError);
}

TEST_CASE("backward before forward is an error") {
  Tape tape;
  CHECK_THROWS(tape.backward(constant(Tensor({1, 1, 1, 1}))));
}

TEST_CASE("conv2d matches a direct-loop oracle and does not flip the kernel") {
  std::mt19937_64 rng(3);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1, 2}) {
      for (int k : {1, 3}) {
        const Tensor x = randn(rng, {2, 3, 7, 6});
        const Tensor w = randn(rng, {4, 3, k, k});
        const Tensor got = conv2d(nullptr, constant(x), constant(w), stride, pad)->value;
        const Tensor want = naive_conv(x, w, stride, pad);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
      }
    }
  }
  // asymmetric kernel: cross-correlation picks x[0,1] for weight at (0,1)
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor w({1, 1, 2, 2}, std::vector<float>{0, 1, 0, 0});
  CHECK(conv2d(nullptr, constant(x), constant(w), 1, 0)->value[0] == 2.0f);
}

TEST_CASE("conv2d shape errors name both shapes") {
  try {
    conv2d(nullptr, constant(Tensor({1, 3, 4, 4})), constant(Tensor({2, 2, 3, 3})), 1, 0);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1, 3, 4, 4)") != std::string::npos);
    CHECK(msg.find("(2, 2, 3, 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(nullptr, constant(Tensor({1, 1, 2, 2})), constant(Tensor({1, 1, 3, 3})), 1, 0),
                  ShapeError);
}

TEST_CASE("batch norm statistics and running estimates") {
  std::mt19937_64 rng(5);
  const Tensor x = randn(rng, {4, 2, 3, 3});
  RunningStats stats = RunningStats::identity(2);
  const Var y = batch_norm(nullptr, constant(x), constant(Tensor({1, 2, 1, 1}, 1.0f)),
                           constant(Tensor({1, 2, 1, 1}, 0.0f)), &stats, Mode::Train);
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0, ym = 0, yv = 0;
    const int count = 4 * 9;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) m += x.at(n, c, i / 3, i % 3);
    m /= count;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) v += std::pow(x.at(n, c, i / 3, i % 3) - m, 2);
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) ym += y->value.at(n, c, i / 3, i % 3);
    ym /= count;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) yv += std::pow(y->value.at(n, c, i / 3, i % 3) - ym, 2);
    CHECK(ym == doctest::Approx(0.0).epsilon(1e-5).scale(1.0));
    CHECK(yv / count == doctest::Approx(v / count / (v / count + 1e-5)).epsilon(1e-4));
    CHECK(stats.mean[c] == doctest::Approx(0.1 * m).epsilon(1e-5));
    CHECK(stats.var[c] == doctest::Approx(0.9 + 0.1 * v / (count - 1)).epsilon(1e-5));
  }
  BatchNormConfig bad;
  bad.eps = 0.0f;
  CHECK_THROWS_AS(batch_norm(nullptr, constant(x), constant(Tensor({1, 2, 1, 1}, 1.0f)),
                             constant(Tensor({1, 2, 1, 1})), nullptr, Mode::Train, bad),
                  ValueError);
}

TEST_CASE("max pool ignores padding and rejects oversized windows") {
  Tensor x({1, 1, 2, 2}, std::vector<float>{-4, -3, -2, -1});
  const Tensor y = max_pool(nullptr, constant(x), 2, 1, 1)->value;
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y[0] == -4.0f);  // a zero pad would have won here
  CHECK(y[4] == -1.0f);
  CHECK_THROWS_AS(max_pool(nullptr, constant(Tensor({1, 1, 2, 2})), 5, 1, 1), ShapeError);
}

TEST_CASE("softmax cross-entropy equals a double log-sum-exp oracle") {
  std::mt19937_64 rng(9);
  const Tensor logits = randn(rng, {3, 5, 1, 1});
  const std::vector<int> targets{0, 4, 2};
  const auto r = softmax_xent(nullptr, constant(logits), targets);
  double want = 0;
  for (int i = 0; i < 3; ++i) {
    double mx = -1e30, s = 0;
    for (int k = 0; k < 5; ++k) mx = std::max(mx, static_cast<double>(logits.at(i, k, 0, 0)));
    for (int k = 0; k < 5; ++k) s += std::exp(logits.at(i, k, 0, 0) - mx);
    want += -(logits.at(i, targets[i], 0, 0) - mx - std::log(s));
  }
  CHECK(r.loss->value[0] == doctest::Approx(want / 3).epsilon(1e-6));
  // large logits stay finite
  Tensor big({1, 2, 1, 1}, std::vector<float>{1000.0f, -1000.0f});
  const std::vector<int> t0{0};
  CHECK(std::isfinite(softmax_xent(nullptr, constant(big), t0).loss->value[0]));
  const std::vector<int> bad{7};
  CHECK_THROWS(softmax_xent(nullptr, constant(big), bad));
}

TEST_CASE("adam first step moves each weight by lr against its gradient sign") {
  Var p = parameter(Tensor({1, 1, 1, 3}, std::vector<float>{1, 1, 1}), "w");
  p->grad = Tensor({1, 1, 1, 3}, std::vector<float>{0.5f, -2.0f, 0.0f});
  AdamState st;
  st.config.lr = 0.01f;
  const std::vector<Var> ps{p};
  adam_step(ps, st);
  // m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
  CHECK(p->value[0] == doctest::Approx(1 - 0.01 * 0.5 / (0.5 + 1e-8)));
  CHECK(p->value[1] == doctest::Approx(1 + 0.01 * 2.0 / (2.0 + 1e-8)));
  CHECK(p->value[2] == doctest::Approx(1.0));
  CHECK(st.step == 1);
}

TEST_CASE("adam rejects a non-finite gradient and names the parameter") {
  Var p = parameter(Tensor({1, 1, 1, 1}), "layer1.0.conv1");
  p->grad = Tensor({1, 1, 1, 1}, std::nanf(""));
  AdamState st;
  const std::vector<Var> ps{p};
  try {
    adam_step(ps, st);
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("layer1.0.conv1") != std::string::npos);
  }
}
