#include "framelog/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "framelog/error.hpp"

namespace framelog::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  int channels, height, width;
  int kh, kw, stride, pad;
  int oh, ow;
  int rows() const { return channels * kh * kw; }
  int cols() const { return oh * ow; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// cols row r = (c * kh + i) * kw + j, column = oy * ow + ox.
void im2col(const float* x, const ConvGeom& g, float* cols) {
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        float* row = cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) *
                                g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          float* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + j;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvGeom& g, float* dx) {
  for (int c = 0; c < g.channels; ++c) {
    float* plane = dx + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const float* row =
            cols + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.height) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const float* src = row + oy * g.ow;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + j;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Var make_result(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

bool needs_tape(Tape* tape, std::initializer_list<const Var*> inputs) {
  if (tape == nullptr) return false;
  for (const Var* v : inputs) {
    if (*v && (*v)->requires_grad) return true;
  }
  return false;
}

void check_channel_vector(const Tensor& t, int channels, const char* what) {
  const Shape s = t.shape();
  if (s.n != 1 || s.c != channels || s.h != 1 || s.w != 1) {
    throw ShapeError(std::string(what) + " must have shape (1, " +
                     std::to_string(channels) + ", 1, 1), got " + s.str());
  }
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Var conv2d(Tape* tape, const Var& x, const Var& kernel, int stride, int pad) {
  const Shape xs = x->value.shape();
  const Shape ks = kernel->value.shape();
  if (ks.c != xs.c) {
    throw ShapeError("conv2d: input " + xs.str() + " has " +
                     std::to_string(xs.c) + " channels but kernel " + ks.str() +
                     " expects " + std::to_string(ks.c));
  }
  if (stride < 1 || pad < 0) {
    throw ValueError("conv2d: stride must be positive and pad non-negative");
  }
  ConvGeom g{xs.c, xs.h, xs.w, ks.h, ks.w, stride, pad,
             conv_out_extent(xs.h, ks.h, stride, pad),
             conv_out_extent(xs.w, ks.w, stride, pad)};
  if (g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv2d: kernel " + ks.str() + " does not fit input " +
                     xs.str() + " with pad " + std::to_string(pad));
  }

  Tensor out({xs.n, ks.n, g.oh, g.ow});
  std::vector<float> cols(g.direct() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
  CMapMat weights(kernel->value.data(), ks.n, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    const float* colp = x->value.sample(n);
    if (!g.direct()) {
      im2col(x->value.sample(n), g, cols.data());
      colp = cols.data();
    }
    MapMat(out.sample(n), ks.n, g.cols()).noalias() =
        weights * CMapMat(colp, g.rows(), g.cols());
  }
  require_finite(out, "conv2d output");

  const bool track = needs_tape(tape, {&x, &kernel});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, kernel, result, g, ks] {
      if (result->grad.empty()) return;
      const int batch = x->value.shape().n;
      std::vector<float> cols(static_cast<std::size_t>(g.rows()) * g.cols());
      CMapMat w(kernel->value.data(), ks.n, g.rows());
      for (int n = 0; n < batch; ++n) {
        CMapMat dout(result->grad.sample(n), ks.n, g.cols());
        if (kernel->requires_grad) {
          const float* colp = x->value.sample(n);
          if (!g.direct()) {
            im2col(x->value.sample(n), g, cols.data());
            colp = cols.data();
          }
          MapMat(kernel->grad_buffer().data(), ks.n, g.rows()).noalias() +=
              dout * CMapMat(colp, g.rows(), g.cols()).transpose();
        }
        if (x->requires_grad) {
          float* dx = x->grad_buffer().sample(n);
          if (g.direct()) {
            MapMat(dx, g.rows(), g.cols()).noalias() += w.transpose() * dout;
          } else {
            MapMat(cols.data(), g.rows(), g.cols()).noalias() = w.transpose() * dout;
            col2im_add(cols.data(), g, dx);
          }
        }
      }
    });
  }
  return result;
}

RunningStats RunningStats::identity(int channels) {
  return {Tensor({1, channels, 1, 1}, 0.0f), Tensor({1, channels, 1, 1}, 1.0f)};
}

Var batch_norm(Tape* tape, const Var& x, const Var& gamma, const Var& beta,
               RunningStats* stats, Mode mode, const BatchNormConfig& cfg) {
  if (mode == Mode::Eval) {
    if (stats == nullptr) throw ValueError("batch_norm: eval mode needs running stats");
    return batch_norm_eval(tape, x, gamma, beta, *stats, cfg);
  }
  if (!(cfg.eps > 0.0f)) throw ValueError("batch_norm: eps must be positive");
  const Shape s = x->value.shape();
  check_channel_vector(gamma->value, s.c, "batch_norm gamma");
  check_channel_vector(beta->value, s.c, "batch_norm beta");
  const std::size_t plane = s.plane();
  const std::size_t count = plane * s.n;
  if (count == 0) throw ShapeError("batch_norm: empty input " + s.str());

  Tensor xhat(s);
  Tensor out(s);
  std::vector<float> inv_std(s.c);
  for (int c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = x->value.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    const double mean = acc / static_cast<double>(count);
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = x->value.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const float istd = static_cast<float>(1.0 / std::sqrt(var + cfg.eps));
    inv_std[c] = istd;
    const float g = gamma->value[c];
    const float b = beta->value[c];
    const float m = static_cast<float>(mean);
    for (int n = 0; n < s.n; ++n) {
      const float* p = x->value.sample(n) + c * plane;
      float* xh = xhat.sample(n) + c * plane;
      float* o = out.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - m) * istd;
        o[i] = g * xh[i] + b;
      }
    }
    if (stats != nullptr) {
      const double unbiased =
          count > 1 ? var * static_cast<double>(count) / (count - 1) : var;
      stats->mean[c] = static_cast<float>((1.0 - cfg.momentum) * stats->mean[c] +
                                          cfg.momentum * mean);
      stats->var[c] = static_cast<float>((1.0 - cfg.momentum) * stats->var[c] +
                                         cfg.momentum * unbiased);
    }
  }

  const bool track = needs_tape(tape, {&x, &gamma, &beta});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, gamma, beta, result, xhat = std::move(xhat),
                  inv_std = std::move(inv_std), s, plane, count] {
      if (result->grad.empty()) return;
      const Tensor& dy = result->grad;
      for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
          const float* g = dy.sample(n) + c * plane;
          const float* xh = xhat.sample(n) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += g[i];
            sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
          }
        }
        if (gamma->requires_grad) gamma->grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
        if (beta->requires_grad) beta->grad_buffer()[c] += static_cast<float>(sum_dy);
        if (!x->requires_grad) continue;
        const double m = static_cast<double>(count);
        const double scale = gamma->value[c] * inv_std[c] / m;
        float* dxbase = x->grad_buffer().data();
        for (int n = 0; n < s.n; ++n) {
          const float* g = dy.sample(n) + c * plane;
          const float* xh = xhat.sample(n) + c * plane;
          float* dx = dxbase + n * x->value.sample_size() + c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            dx[i] += static_cast<float>(
                scale * (m * g[i] - sum_dy - xh[i] * sum_dy_xhat));
          }
        }
      }
    });
  }
  return result;
}

Var batch_norm_eval(Tape* tape, const Var& x, const Var& gamma, const Var& beta,
                    const RunningStats& stats, const BatchNormConfig& cfg) {
  if (!(cfg.eps > 0.0f)) throw ValueError("batch_norm: eps must be positive");
  const Shape s = x->value.shape();
  check_channel_vector(gamma->value, s.c, "batch_norm gamma");
  check_channel_vector(beta->value, s.c, "batch_norm beta");
  check_channel_vector(stats.mean, s.c, "batch_norm running mean");
  check_channel_vector(stats.var, s.c, "batch_norm running var");
  const std::size_t plane = s.plane();
  std::vector<float> scale(s.c), shift(s.c);
  for (int c = 0; c < s.c; ++c) {
    if (stats.var[c] < 0.0f) throw ValueError("batch_norm: negative running variance");
    const float istd = 1.0f / std::sqrt(stats.var[c] + cfg.eps);
    scale[c] = gamma->value[c] * istd;
    shift[c] = beta->value[c] - stats.mean[c] * scale[c];
  }
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.sample(n) + c * plane;
      float* o = out.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * scale[c] + shift[c];
    }
  }
  const bool track = needs_tape(tape, {&x, &gamma, &beta});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, gamma, beta, result, stats, cfg, s, plane] {
      if (result->grad.empty()) return;
      const Tensor& dy = result->grad;
      for (int c = 0; c < s.c; ++c) {
        const float istd = 1.0f / std::sqrt(stats.var[c] + cfg.eps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
          const float* g = dy.sample(n) + c * plane;
          const float* p = x->value.sample(n) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += g[i];
            sum_dy_xhat += static_cast<double>(g[i]) * (p[i] - stats.mean[c]) * istd;
          }
        }
        if (gamma->requires_grad) gamma->grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
        if (beta->requires_grad) beta->grad_buffer()[c] += static_cast<float>(sum_dy);
        if (!x->requires_grad) continue;
        const float scale = gamma->value[c] * istd;
        for (int n = 0; n < s.n; ++n) {
          const float* g = dy.sample(n) + c * plane;
          float* dx = x->grad_buffer().sample(n) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) dx[i] += g[i] * scale;
        }
      }
    });
  }
  return result;
}

Var relu(Tape* tape, const Var& x) {
  Tensor out(x->value.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0f, x->value[i]);
  const bool track = needs_tape(tape, {&x});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, result] {
      if (result->grad.empty()) return;
      Tensor& dx = x->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x->value[i] > 0.0f) dx[i] += result->grad[i];
      }
    });
  }
  return result;
}

Var add(Tape* tape, const Var& a, const Var& b) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError("add: operand shapes differ: " + a->value.shape().str() +
                     " vs " + b->value.shape().str());
  }
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  const bool track = needs_tape(tape, {&a, &b});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([a, b, result] {
      if (result->grad.empty()) return;
      for (const Var* v : {&a, &b}) {
        if (!(*v)->requires_grad) continue;
        Tensor& d = (*v)->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += result->grad[i];
      }
    });
  }
  return result;
}

Var max_pool(Tape* tape, const Var& x, int kernel, int stride, int pad) {
  const Shape s = x->value.shape();
  if (kernel < 1 || stride < 1 || pad < 0) {
    throw ValueError("max_pool: kernel and stride must be positive, pad non-negative");
  }
  if (s.h + 2 * pad < kernel || s.w + 2 * pad < kernel) {
    throw ShapeError("max_pool: window " + std::to_string(kernel) +
                     " larger than padded input " + s.str());
  }
  if (pad >= kernel) throw ValueError("max_pool: pad must be smaller than the window");
  const int oh = conv_out_extent(s.h, kernel, stride, pad);
  const int ow = conv_out_extent(s.w, kernel, stride, pad);
  Tensor out({s.n, s.c, oh, ow});
  std::vector<std::uint32_t> argmax(out.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      const float* plane = x->value.data() + base;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_idx = 0;
          bool found = false;
          for (int i = 0; i < kernel; ++i) {
            const int iy = oy * stride - pad + i;
            if (iy < 0 || iy >= s.h) continue;
            for (int j = 0; j < kernel; ++j) {
              const int ix = ox * stride - pad + j;
              if (ix < 0 || ix >= s.w) continue;
              const std::size_t idx = static_cast<std::size_t>(iy) * s.w + ix;
              if (!found || plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
                found = true;
              }
            }
          }
          out[o] = best;
          argmax[o] = static_cast<std::uint32_t>(base + best_idx);
        }
      }
    }
  }
  const bool track = needs_tape(tape, {&x});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, result, argmax = std::move(argmax)] {
      if (result->grad.empty()) return;
      Tensor& dx = x->grad_buffer();
      for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += result->grad[i];
    });
  }
  return result;
}

Var global_avg_pool(Tape* tape, const Var& x) {
  const Shape s = x->value.shape();
  const std::size_t plane = s.plane();
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent " + s.str());
  Tensor out({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.sample(n) + c * plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out[static_cast<std::size_t>(n) * s.c + c] = static_cast<float>(acc / plane);
    }
  }
  const bool track = needs_tape(tape, {&x});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, result, s, plane] {
      if (result->grad.empty()) return;
      Tensor& dx = x->grad_buffer();
      const float inv = 1.0f / static_cast<float>(plane);
      for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
          const float g = result->grad[static_cast<std::size_t>(n) * s.c + c] * inv;
          float* d = dx.sample(n) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) d[i] += g;
        }
      }
    });
  }
  return result;
}

Var upsample_nearest(Tape* tape, const Var& x, int out_h, int out_w) {
  const Shape s = x->value.shape();
  if (out_h < 1 || out_w < 1) throw ShapeError("upsample_nearest: empty target size");
  std::vector<std::uint32_t> src(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * s.h / out_h);
    for (int xx = 0; xx < out_w; ++xx) {
      const int sx = static_cast<int>(static_cast<long long>(xx) * s.w / out_w);
      src[static_cast<std::size_t>(y) * out_w + xx] =
          static_cast<std::uint32_t>(sy * s.w + sx);
    }
  }
  Tensor out({s.n, s.c, out_h, out_w});
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = src.size();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    const float* in = x->value.data() + p * in_plane;
    float* o = out.data() + p * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) o[i] = in[src[i]];
  }
  const bool track = needs_tape(tape, {&x});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, result, src = std::move(src), s, in_plane, out_plane] {
      if (result->grad.empty()) return;
      Tensor& dx = x->grad_buffer();
      for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
        const float* g = result->grad.data() + p * out_plane;
        float* d = dx.data() + p * in_plane;
        for (std::size_t i = 0; i < out_plane; ++i) d[src[i]] += g[i];
      }
    });
  }
  return result;
}

Var linear(Tape* tape, const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->value.shape();
  const Shape ws = weight->value.shape();
  const int features = static_cast<int>(x->value.sample_size());
  if (ws.h != 1 || ws.w != 1 || ws.c != features) {
    throw ShapeError("linear: input " + xs.str() + " does not conform to weight " +
                     ws.str());
  }
  check_channel_vector(bias->value, ws.n, "linear bias");
  Tensor out({xs.n, ws.n, 1, 1});
  CMapMat xm(x->value.data(), xs.n, features);
  CMapMat wm(weight->value.data(), ws.n, features);
  MapMat om(out.data(), xs.n, ws.n);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < xs.n; ++n) {
    for (int o = 0; o < ws.n; ++o) om(n, o) += bias->value[o];
  }
  require_finite(out, "linear output");
  const bool track = needs_tape(tape, {&x, &weight, &bias});
  Var result = make_result(std::move(out), track);
  if (track) {
    tape->record([x, weight, bias, result, xs, ws, features] {
      if (result->grad.empty()) return;
      CMapMat dout(result->grad.data(), xs.n, ws.n);
      if (x->requires_grad) {
        MapMat(x->grad_buffer().data(), xs.n, features).noalias() +=
            dout * CMapMat(weight->value.data(), ws.n, features);
      }
      if (weight->requires_grad) {
        MapMat(weight->grad_buffer().data(), ws.n, features).noalias() +=
            dout.transpose() * CMapMat(x->value.data(), xs.n, features);
      }
      if (bias->requires_grad) {
        Tensor& db = bias->grad_buffer();
        for (int n = 0; n < xs.n; ++n) {
          for (int o = 0; o < ws.n; ++o) db[o] += dout(n, o);
        }
      }
    });
  }
  return result;
}

Var weighted_sum(Tape* tape, const Var& x, const Tensor& weights) {
  if (weights.shape() != x->value.shape()) {
    throw ShapeError("weighted_sum: weights " + weights.shape().str() +
                     " vs input " + x->value.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += static_cast<double>(x->value[i]) * weights[i];
  }
  const bool track = needs_tape(tape, {&x});
  Var result = make_result(Tensor({1, 1, 1, 1}, static_cast<float>(acc)), track);
  if (track) {
    tape->record([x, result, weights] {
      if (result->grad.empty()) return;
      const float g = result->grad[0];
      Tensor& dx = x->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * weights[i];
    });
  }
  return result;
}

Var sum(Tape* tape, const Var& x) {
  return weighted_sum(tape, x, Tensor(x->value.shape(), 1.0f));
}

std::vector<float> softmax(std::span<const float> logits) {
  if (logits.empty()) throw ValueError("softmax: empty logits");
  const float mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (float v : logits) z += std::exp(static_cast<double>(v) - mx);
  std::vector<float> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - mx) / z);
  }
  return probs;
}

std::pair<double, std::vector<float>> softmax_xent(std::span<const float> logits,
                                                   int target) {
  if (logits.empty()) throw ValueError("softmax_xent: empty logits");
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw ValueError("softmax_xent: target " + std::to_string(target) +
                     " outside " + std::to_string(logits.size()) + " classes");
  }
  const float mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (float v : logits) z += std::exp(static_cast<double>(v) - mx);
  const double loss = std::log(z) - (static_cast<double>(logits[target]) - mx);
  return {loss, softmax(logits)};
}

XentResult softmax_xent(Tape* tape, const Var& logits, std::span<const int> targets) {
  const Shape s = logits->value.shape();
  const int classes = static_cast<int>(logits->value.sample_size());
  if (classes == 0) throw ValueError("softmax_xent: empty logits");
  if (static_cast<int>(targets.size()) != s.n) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) +
                     " targets for batch of " + std::to_string(s.n));
  }
  Tensor probs({s.n, classes, 1, 1});
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    auto [loss, p] = softmax_xent(
        std::span<const float>(logits->value.sample(n), classes), targets[n]);
    total += loss;
    std::copy(p.begin(), p.end(), probs.sample(n));
  }
  const double mean = total / s.n;
  if (!std::isfinite(mean)) throw ValueError("softmax_xent: non-finite loss");
  const bool track = needs_tape(tape, {&logits});
  Var loss = make_result(Tensor({1, 1, 1, 1}, static_cast<float>(mean)), track);
  if (track) {
    std::vector<int> tgt(targets.begin(), targets.end());
    tape->record([logits, loss, probs, tgt = std::move(tgt), classes] {
      if (loss->grad.empty()) return;
      const float g = loss->grad[0] / static_cast<float>(tgt.size());
      Tensor& dl = logits->grad_buffer();
      for (std::size_t n = 0; n < tgt.size(); ++n) {
        const float* p = probs.sample(static_cast<int>(n));
        float* d = dl.sample(static_cast<int>(n));
        for (int k = 0; k < classes; ++k) {
          d[k] += g * (p[k] - (k == tgt[n] ? 1.0f : 0.0f));
        }
      }
    });
  }
  return {loss, std::move(probs)};
}

}  // namespace framelog::nn
