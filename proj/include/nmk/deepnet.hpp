#pragma once

// Hybrid network: a dense branch over the feature vector in parallel with a
// 1-D convolutional branch over the standardized signal, concatenated into
// a small dense head with a softmax output.
//
//   features -> dense(30) relu -> dense(20) relu -> dense(10) relu --------+
//   signal   -> conv(128, 5) -> BN -> dropout -> maxpool(4)                 |-> concat
//            -> conv(32, 5)  -> BN -> dropout -> maxpool(4) -> flatten ----+
//   concat -> dense(10) relu -> dense(2) -> softmax
//
// Convolutions use zero "same" padding and carry no bias (the batch-norm
// shift plays that role). Training is mini-batch Adam on mean cross-entropy.
// Everything runs in double precision on one thread.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmk/binio.hpp"
#include "nmk/core.hpp"
#include "nmk/ingest.hpp"
#include "nmk/rng.hpp"

namespace nmk::deepnet {

struct NetSpec {
  std::size_t n_features = 10;
  std::vector<std::size_t> dense_widths = {30, 20, 10};
  std::size_t conv1_kernels = 128;
  std::size_t conv2_kernels = 32;
  std::size_t kernel_size = 5;
  std::size_t head_width = 10;
  std::size_t signal_length = kSamplesPerAd;
  std::size_t pool_width = 4;
  double dropout_rate = 0.3;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 1;
  double bn_momentum = 0.99;
  double bn_eps = 1e-3;

  static constexpr std::size_t kClasses = 2;

  std::size_t pooled1() const { return signal_length / pool_width; }
  std::size_t pooled2() const { return pooled1() / pool_width; }
  std::size_t flat_size() const { return conv2_kernels * pooled2(); }
  std::size_t concat_size() const { return (dense_widths.empty() ? n_features : dense_widths.back()) + flat_size(); }

  void validate() const {
    if (kernel_size % 2 == 0) throw ParameterError("kernel size must be odd");
    if (pool_width < 1 || pooled2() < 1) throw ParameterError("signal too short for two pooling stages");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ParameterError("dropout rate must lie in [0, 1)");
    if (batch_size < 1 || epochs < 0) throw ParameterError("batch size must be >= 1 and epochs >= 0");
    if (n_features < 1 || conv1_kernels < 1 || conv2_kernels < 1 || head_width < 1) {
      throw ParameterError("layer widths must be positive");
    }
    for (auto w : dense_widths) if (w < 1) throw ParameterError("dense widths must be positive");
  }
};

struct Dense {
  std::size_t in = 0, out = 0;
  std::vector<double> W;  // out x in
  std::vector<double> b;
};

struct Conv {
  std::size_t in_ch = 0, out_ch = 0, ks = 0;
  std::vector<double> W;  // out_ch x in_ch x ks
};

struct BatchNorm {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
};

struct NetParams {
  NetSpec spec;
  std::vector<Dense> dense;
  Conv conv1, conv2;
  BatchNorm bn1, bn2;
  Dense head, out;

  // Visits trainable tensors in a fixed order.
  template <class F>
  void for_each_trainable(F&& f) {
    for (std::size_t i = 0; i < dense.size(); ++i) {
      f("dense" + std::to_string(i) + ".W", dense[i].W);
      f("dense" + std::to_string(i) + ".b", dense[i].b);
    }
    f("conv1.W", conv1.W);
    f("bn1.gamma", bn1.gamma);
    f("bn1.beta", bn1.beta);
    f("conv2.W", conv2.W);
    f("bn2.gamma", bn2.gamma);
    f("bn2.beta", bn2.beta);
    f("head.W", head.W);
    f("head.b", head.b);
    f("out.W", out.W);
    f("out.b", out.b);
  }
  template <class F>
  void for_each_trainable(F&& f) const {
    const_cast<NetParams*>(this)->for_each_trainable(
        [&](const std::string& name, std::vector<double>& v) { f(name, static_cast<const std::vector<double>&>(v)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_trainable([&](const std::string&, const std::vector<double>& v) { n += v.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_trainable([&](const std::string&, const std::vector<double>& v) {
      for (double x : v) ok = ok && std::isfinite(x);
    });
    for (const auto* bn : {&bn1, &bn2}) {
      for (double x : bn->running_mean) ok = ok && std::isfinite(x);
      for (double x : bn->running_var) ok = ok && std::isfinite(x) && x > 0;
    }
    return ok;
  }
};

// Same shapes as the parameters, all zero.
inline NetParams zeros_like(const NetParams& p) {
  NetParams g = p;
  g.for_each_trainable([](const std::string&, std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
  return g;
}

namespace detail {
inline Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : d.W) w = rng.uniform(-limit, limit);
  return d;
}
inline Conv make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t ks, Rng& rng) {
  Conv c{in_ch, out_ch, ks, std::vector<double>(in_ch * out_ch * ks)};
  const double limit = std::sqrt(6.0 / static_cast<double>((in_ch + out_ch) * ks));
  for (auto& w : c.W) w = rng.uniform(-limit, limit);
  return c;
}
inline BatchNorm make_bn(std::size_t ch) {
  return {std::vector<double>(ch, 1.0), std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0),
          std::vector<double>(ch, 1.0)};
}
}  // namespace detail

// Glorot-uniform weights, zero biases, identity batch norm.
inline NetParams init_params(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, {0x1417}));
  NetParams p;
  p.spec = spec;
  std::size_t in = spec.n_features;
  for (auto w : spec.dense_widths) {
    p.dense.push_back(detail::make_dense(in, w, rng));
    in = w;
  }
  p.conv1 = detail::make_conv(1, spec.conv1_kernels, spec.kernel_size, rng);
  p.bn1 = detail::make_bn(spec.conv1_kernels);
  p.conv2 = detail::make_conv(spec.conv1_kernels, spec.conv2_kernels, spec.kernel_size, rng);
  p.bn2 = detail::make_bn(spec.conv2_kernels);
  p.head = detail::make_dense(spec.concat_size(), spec.head_width, rng);
  p.out = detail::make_dense(spec.head_width, NetSpec::kClasses, rng);
  return p;
}

struct NetSample {
  std::vector<double> features;
  std::vector<double> signal;  // standardized
  Reaction label = Reaction::Negative;
};

// Zero mean, unit variance; a constant signal maps to zeros.
inline std::vector<double> standardize(std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double var = 0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  const double inv = var > 0 ? 1.0 / std::sqrt(var) : 0.0;
  for (auto& v : y) v = (v - mean) * inv;
  return y;
}

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Layer kernels
// ---------------------------------------------------------------------------

namespace detail {

// y (out_ch x len) = W * x (in_ch x len), zero "same" padding.
inline void conv_forward(const double* x, const Conv& c, std::size_t len, double* y) {
  const auto pad = static_cast<std::ptrdiff_t>(c.ks / 2);
  const auto n = static_cast<std::ptrdiff_t>(len);
  std::fill(y, y + c.out_ch * len, 0.0);
  for (std::size_t o = 0; o < c.out_ch; ++o) {
    double* yo = y + o * len;
    for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
      const double* xc = x + ch * len;
      const double* w = c.W.data() + (o * c.in_ch + ch) * c.ks;
      for (std::size_t k = 0; k < c.ks; ++k) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n, n - shift);
        const double wk = w[k];
        const double* xs = xc + shift;
        for (std::ptrdiff_t t = t0; t < t1; ++t) yo[t] += wk * xs[t];
      }
    }
  }
}

// Accumulates dW and (if dx != nullptr) dx from dy.
inline void conv_backward(const double* x, const Conv& c, std::size_t len, const double* dy, double* dW, double* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(c.ks / 2);
  const auto n = static_cast<std::ptrdiff_t>(len);
  for (std::size_t o = 0; o < c.out_ch; ++o) {
    const double* dyo = dy + o * len;
    for (std::size_t ch = 0; ch < c.in_ch; ++ch) {
      const double* xc = x + ch * len;
      const double* w = c.W.data() + (o * c.in_ch + ch) * c.ks;
      double* dw = dW + (o * c.in_ch + ch) * c.ks;
      for (std::size_t k = 0; k < c.ks; ++k) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n, n - shift);
        const double* xs = xc + shift;
        double acc = 0;
        for (std::ptrdiff_t t = t0; t < t1; ++t) acc += dyo[t] * xs[t];
        dw[k] += acc;
        if (dx) {
          double* dxs = dx + ch * len + shift;
          const double wk = w[k];
          for (std::ptrdiff_t t = t0; t < t1; ++t) dxs[t] += wk * dyo[t];
        }
      }
    }
  }
}

struct BnCache {
  std::vector<double> xhat;     // batch x ch x len
  std::vector<double> inv_std;  // ch
  std::vector<double> mean, var;
};

// In-place batch norm over (batch, position) per channel.
inline void bn_forward(std::vector<double>& x, std::size_t batch, std::size_t ch, std::size_t len,
                       const BatchNorm& bn, double eps, Mode mode, BnCache* cache) {
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  if (mode == Mode::train) {
    const double count = static_cast<double>(batch * len);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const double* p = x.data() + (b * ch + c) * len;
        double s = 0;
        for (std::size_t t = 0; t < len; ++t) s += p[t];
        mean[c] += s;
      }
    for (auto& m : mean) m /= count;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const double* p = x.data() + (b * ch + c) * len;
        double s = 0;
        for (std::size_t t = 0; t < len; ++t) s += (p[t] - mean[c]) * (p[t] - mean[c]);
        var[c] += s;
      }
    for (auto& v : var) v /= count;
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }
  std::vector<double> inv(ch);
  for (std::size_t c = 0; c < ch; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);
  if (cache) cache->xhat.resize(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      double* p = x.data() + (b * ch + c) * len;
      double* xh = cache ? cache->xhat.data() + (b * ch + c) * len : nullptr;
      for (std::size_t t = 0; t < len; ++t) {
        const double h = (p[t] - mean[c]) * inv[c];
        if (xh) xh[t] = h;
        p[t] = bn.gamma[c] * h + bn.beta[c];
      }
    }
  if (cache) {
    cache->inv_std = std::move(inv);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
  }
}

// dy -> dx in place; accumulates dgamma, dbeta. Train-mode statistics.
inline void bn_backward(std::vector<double>& d, std::size_t batch, std::size_t ch, std::size_t len,
                        const BatchNorm& bn, const BnCache& cache, std::vector<double>& dgamma,
                        std::vector<double>& dbeta) {
  const double count = static_cast<double>(batch * len);
  std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double* dp = d.data() + (b * ch + c) * len;
      const double* xh = cache.xhat.data() + (b * ch + c) * len;
      double s1 = 0, s2 = 0;
      for (std::size_t t = 0; t < len; ++t) {
        s1 += dp[t];
        s2 += dp[t] * xh[t];
      }
      sum_dy[c] += s1;
      sum_dy_xhat[c] += s2;
    }
  for (std::size_t c = 0; c < ch; ++c) {
    dgamma[c] += sum_dy_xhat[c];
    dbeta[c] += sum_dy[c];
  }
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      double* dp = d.data() + (b * ch + c) * len;
      const double* xh = cache.xhat.data() + (b * ch + c) * len;
      const double k = bn.gamma[c] * cache.inv_std[c] / count;
      const double m1 = sum_dy[c], m2 = sum_dy_xhat[c];
      for (std::size_t t = 0; t < len; ++t) dp[t] = k * (count * dp[t] - m1 - xh[t] * m2);
    }
}

// Non-overlapping max pooling; trailing samples that do not fill a window
// are dropped. argmax holds the winning input index per output.
inline void pool_forward(const std::vector<double>& x, std::size_t rows, std::size_t len, std::size_t width,
                         std::vector<double>& y, std::vector<std::uint32_t>& argmax) {
  const std::size_t out_len = len / width;
  y.assign(rows * out_len, 0.0);
  argmax.assign(rows * out_len, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = x.data() + r * len;
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = t * width;
      for (std::size_t k = 1; k < width; ++k)
        if (p[t * width + k] > p[best]) best = t * width + k;
      y[r * out_len + t] = p[best];
      argmax[r * out_len + t] = static_cast<std::uint32_t>(best);
    }
  }
}

inline void dense_forward(const Dense& d, const double* x, double* y) {
  for (std::size_t o = 0; o < d.out; ++o) {
    double s = d.b[o];
    const double* w = d.W.data() + o * d.in;
    for (std::size_t i = 0; i < d.in; ++i) s += w[i] * x[i];
    y[o] = s;
  }
}

}  // namespace detail

// Activations kept for the backward pass.
struct Cache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> dense_in;   // per layer, batch x in
  std::vector<std::vector<double>> dense_pre;  // per layer, batch x out
  std::vector<double> signal;                  // batch x L
  detail::BnCache bn1, bn2;
  std::vector<double> mask1, mask2;  // scaled keep masks (empty: no dropout)
  std::vector<std::uint32_t> arg1, arg2;
  std::vector<double> pooled1;  // batch x K1 x L/p
  std::vector<double> concat;   // batch x concat
  std::vector<double> head_pre; // batch x H
  std::vector<double> head_act;
  std::vector<double> probs;    // batch x 2
};

// Class probabilities for a batch (batch x 2, row-major). In train mode batch
// statistics are used and dropout draws from `dropout_rng` when the rate is
// non-zero; infer mode uses running statistics and no dropout.
inline std::vector<double> forward_batch(const NetParams& p, std::span<const NetSample> batch, Mode mode,
                                         Rng* dropout_rng = nullptr, Cache* cache = nullptr) {
  const auto& s = p.spec;
  const std::size_t B = batch.size();
  if (B == 0) throw ShapeError("empty batch");
  for (const auto& x : batch) {
    if (x.features.size() != s.n_features) {
      throw ShapeError("feature vector of length " + std::to_string(x.features.size()) + ", expected " +
                       std::to_string(s.n_features));
    }
    if (x.signal.size() != s.signal_length) {
      throw ShapeError("signal of length " + std::to_string(x.signal.size()) + ", expected " +
                       std::to_string(s.signal_length));
    }
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c = Cache{};
  c.batch = B;

  // Dense branch.
  std::vector<double> a(B * s.n_features);
  for (std::size_t b = 0; b < B; ++b) std::copy(batch[b].features.begin(), batch[b].features.end(), a.begin() + static_cast<std::ptrdiff_t>(b * s.n_features));
  for (const auto& layer : p.dense) {
    std::vector<double> z(B * layer.out);
    for (std::size_t b = 0; b < B; ++b) detail::dense_forward(layer, a.data() + b * layer.in, z.data() + b * layer.out);
    c.dense_in.push_back(std::move(a));
    a.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::max(0.0, z[i]);
    c.dense_pre.push_back(std::move(z));
  }
  const std::size_t dense_out = p.dense.empty() ? s.n_features : p.dense.back().out;

  // Convolutional branch.
  const std::size_t L = s.signal_length, K1 = s.conv1_kernels, K2 = s.conv2_kernels;
  const std::size_t L1 = s.pooled1(), L2 = s.pooled2();
  c.signal.resize(B * L);
  for (std::size_t b = 0; b < B; ++b) std::copy(batch[b].signal.begin(), batch[b].signal.end(), c.signal.begin() + static_cast<std::ptrdiff_t>(b * L));

  const bool drop = mode == Mode::train && s.dropout_rate > 0;
  if (drop && !dropout_rng) throw ParameterError("dropout needs a random source in train mode");
  auto apply_dropout = [&](std::vector<double>& x, std::vector<double>& mask) {
    if (!drop) return;
    const double keep = 1.0 - s.dropout_rate;
    mask.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      x[i] *= mask[i];
    }
  };

  std::vector<double> z1(B * K1 * L);
  for (std::size_t b = 0; b < B; ++b) detail::conv_forward(c.signal.data() + b * L, p.conv1, L, z1.data() + b * K1 * L);
  detail::bn_forward(z1, B, K1, L, p.bn1, s.bn_eps, mode, &c.bn1);
  apply_dropout(z1, c.mask1);
  detail::pool_forward(z1, B * K1, L, s.pool_width, c.pooled1, c.arg1);
  z1 = {};

  std::vector<double> z2(B * K2 * L1);
  for (std::size_t b = 0; b < B; ++b) detail::conv_forward(c.pooled1.data() + b * K1 * L1, p.conv2, L1, z2.data() + b * K2 * L1);
  detail::bn_forward(z2, B, K2, L1, p.bn2, s.bn_eps, mode, &c.bn2);
  apply_dropout(z2, c.mask2);
  std::vector<double> pooled2;
  detail::pool_forward(z2, B * K2, L1, s.pool_width, pooled2, c.arg2);

  // Concatenate [dense branch | flattened conv branch] and run the head.
  const std::size_t C = dense_out + K2 * L2;
  c.concat.resize(B * C);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(a.data() + b * dense_out, dense_out, c.concat.data() + b * C);
    std::copy_n(pooled2.data() + b * K2 * L2, K2 * L2, c.concat.data() + b * C + dense_out);
  }
  const std::size_t H = s.head_width;
  c.head_pre.resize(B * H);
  c.head_act.resize(B * H);
  for (std::size_t b = 0; b < B; ++b) detail::dense_forward(p.head, c.concat.data() + b * C, c.head_pre.data() + b * H);
  for (std::size_t i = 0; i < B * H; ++i) c.head_act[i] = std::max(0.0, c.head_pre[i]);

  c.probs.resize(B * NetSpec::kClasses);
  for (std::size_t b = 0; b < B; ++b) {
    double logit[NetSpec::kClasses];
    detail::dense_forward(p.out, c.head_act.data() + b * H, logit);
    const double m = std::max(logit[0], logit[1]);
    const double e0 = std::exp(logit[0] - m), e1 = std::exp(logit[1] - m);
    c.probs[b * 2] = e0 / (e0 + e1);
    c.probs[b * 2 + 1] = e1 / (e0 + e1);
  }
  return c.probs;
}

// Probabilities (Negative, Positive) for one sample in infer mode.
inline std::array<double, 2> forward(const NetParams& p, const NetSample& x) {
  const auto probs = forward_batch(p, std::span<const NetSample>(&x, 1), Mode::infer);
  return {probs[0], probs[1]};
}

inline double cross_entropy(std::span<const double> probs, std::span<const NetSample> batch) {
  double loss = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double pt = probs[b * 2 + static_cast<std::size_t>(batch[b].label)];
    loss -= std::log(std::max(pt, std::numeric_limits<double>::min()));
  }
  return loss / static_cast<double>(batch.size());
}

// Gradient of loss_scale * mean cross-entropy w.r.t. every trainable tensor,
// given the cache of a train-mode forward pass on the same batch.
inline NetParams backward(const NetParams& p, std::span<const NetSample> batch, const Cache& c,
                          double loss_scale = 1.0) {
  const auto& s = p.spec;
  const std::size_t B = c.batch;
  const std::size_t L = s.signal_length, K1 = s.conv1_kernels, K2 = s.conv2_kernels;
  const std::size_t L1 = s.pooled1(), L2 = s.pooled2();
  const std::size_t dense_out = p.dense.empty() ? s.n_features : p.dense.back().out;
  const std::size_t C = dense_out + K2 * L2;
  const std::size_t H = s.head_width;
  NetParams g = zeros_like(p);

  // Softmax + cross-entropy.
  std::vector<double> dlogit(B * 2);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double target = static_cast<std::size_t>(batch[b].label) == k ? 1.0 : 0.0;
      dlogit[b * 2 + k] = loss_scale * (c.probs[b * 2 + k] - target) / static_cast<double>(B);
    }
  }

  auto dense_back = [](const Dense& d, Dense& gd, const double* x, const double* dy, double* dx) {
    for (std::size_t o = 0; o < d.out; ++o) {
      gd.b[o] += dy[o];
      const double* w = d.W.data() + o * d.in;
      double* gw = gd.W.data() + o * d.in;
      for (std::size_t i = 0; i < d.in; ++i) {
        gw[i] += dy[o] * x[i];
        if (dx) dx[i] += w[i] * dy[o];
      }
    }
  };

  std::vector<double> dhead(B * H, 0.0);
  for (std::size_t b = 0; b < B; ++b) dense_back(p.out, g.out, c.head_act.data() + b * H, dlogit.data() + b * 2, dhead.data() + b * H);
  for (std::size_t i = 0; i < B * H; ++i) if (c.head_pre[i] <= 0) dhead[i] = 0;
  std::vector<double> dconcat(B * C, 0.0);
  for (std::size_t b = 0; b < B; ++b) dense_back(p.head, g.head, c.concat.data() + b * C, dhead.data() + b * H, dconcat.data() + b * C);

  // Dense branch.
  std::vector<double> da(B * dense_out);
  for (std::size_t b = 0; b < B; ++b) std::copy_n(dconcat.data() + b * C, dense_out, da.data() + b * dense_out);
  for (std::size_t li = p.dense.size(); li-- > 0;) {
    const auto& layer = p.dense[li];
    const auto& pre = c.dense_pre[li];
    for (std::size_t i = 0; i < da.size(); ++i) if (pre[i] <= 0) da[i] = 0;
    std::vector<double> dprev(B * layer.in, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      dense_back(layer, g.dense[li], c.dense_in[li].data() + b * layer.in, da.data() + b * layer.out,
                 li > 0 ? dprev.data() + b * layer.in : nullptr);
    }
    da = std::move(dprev);
  }

  // Convolutional branch: unpool, dropout, BN, conv (twice).
  std::vector<double> dz2(B * K2 * L1, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < K2; ++r)
      for (std::size_t t = 0; t < L2; ++t) {
        const std::size_t row = b * K2 + r;
        dz2[row * L1 + c.arg2[row * L2 + t]] += dconcat[b * C + dense_out + r * L2 + t];
      }
  if (!c.mask2.empty()) for (std::size_t i = 0; i < dz2.size(); ++i) dz2[i] *= c.mask2[i];
  detail::bn_backward(dz2, B, K2, L1, p.bn2, c.bn2, g.bn2.gamma, g.bn2.beta);
  std::vector<double> dpooled1(B * K1 * L1, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    detail::conv_backward(c.pooled1.data() + b * K1 * L1, p.conv2, L1, dz2.data() + b * K2 * L1, g.conv2.W.data(),
                          dpooled1.data() + b * K1 * L1);
  }
  std::vector<double> dz1(B * K1 * L, 0.0);
  for (std::size_t row = 0; row < B * K1; ++row)
    for (std::size_t t = 0; t < L1; ++t) dz1[row * L + c.arg1[row * L1 + t]] += dpooled1[row * L1 + t];
  if (!c.mask1.empty()) for (std::size_t i = 0; i < dz1.size(); ++i) dz1[i] *= c.mask1[i];
  detail::bn_backward(dz1, B, K1, L, p.bn1, c.bn1, g.bn1.gamma, g.bn1.beta);
  for (std::size_t b = 0; b < B; ++b) {
    detail::conv_backward(c.signal.data() + b * L, p.conv1, L, dz1.data() + b * K1 * L, g.conv1.W.data(), nullptr);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  NetParams params;
  double initial_loss = 0;          // infer-mode loss before the first update
  std::vector<double> epoch_loss;   // mean train-mode batch loss per epoch
};

namespace detail {
struct Adam {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

inline void update_running(BatchNorm& bn, const BnCache& c, double momentum) {
  for (std::size_t i = 0; i < bn.running_mean.size(); ++i) {
    bn.running_mean[i] = momentum * bn.running_mean[i] + (1 - momentum) * c.mean[i];
    bn.running_var[i] = momentum * bn.running_var[i] + (1 - momentum) * c.var[i];
  }
}
}  // namespace detail

inline double mean_loss(const NetParams& p, std::span<const NetSample> data, Mode mode = Mode::infer) {
  double total = 0;
  const std::size_t bs = std::max<std::size_t>(1, p.spec.batch_size);
  for (std::size_t i = 0; i < data.size(); i += bs) {
    const auto batch = data.subspan(i, std::min(bs, data.size() - i));
    total += cross_entropy(forward_batch(p, batch, mode), batch) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

inline TrainResult train(const NetSpec& spec, std::span<const NetSample> data, std::uint64_t seed) {
  spec.validate();
  if (data.empty()) throw ShapeError("no training data");
  std::size_t pos = 0;
  for (const auto& x : data) pos += x.label == Reaction::Positive;
  if (pos == 0 || pos == data.size()) throw DegenerateTrainingError("training data holds a single class");

  TrainResult r;
  r.params = init_params(spec, seed);
  NetParams& p = r.params;
  r.initial_loss = mean_loss(p, data);

  detail::Adam adam;
  p.for_each_trainable([&](const std::string&, std::vector<double>& v) {
    adam.m.emplace_back(v.size(), 0.0);
    adam.v.emplace_back(v.size(), 0.0);
  });

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<NetSample> batch;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, {0x5aff1e, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    double epoch_total = 0;
    std::size_t bi = 0;
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size, ++bi) {
      const std::size_t end = std::min(order.size(), start + spec.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      Rng dropout_rng(derive_seed(seed, {0xd209, static_cast<std::uint64_t>(epoch), bi}));
      Cache cache;
      const auto probs = forward_batch(p, batch, Mode::train, &dropout_rng, &cache);
      const double loss = cross_entropy(probs, batch);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(bi + 1));
      }
      epoch_total += loss * static_cast<double>(batch.size());
      const NetParams g = backward(p, batch, cache);

      ++adam.step;
      const double bc1 = 1.0 - std::pow(spec.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(spec.beta2, static_cast<double>(adam.step));
      std::vector<const std::vector<double>*> grads;
      g.for_each_trainable([&](const std::string&, const std::vector<double>& v) { grads.push_back(&v); });
      std::size_t ti = 0;
      p.for_each_trainable([&](const std::string&, std::vector<double>& w) {
        auto& m = adam.m[ti];
        auto& v = adam.v[ti];
        const auto& gr = *grads[ti];
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = spec.beta1 * m[i] + (1 - spec.beta1) * gr[i];
          v[i] = spec.beta2 * v[i] + (1 - spec.beta2) * gr[i] * gr[i];
          w[i] -= spec.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + spec.adam_eps);
        }
        ++ti;
      });
      detail::update_running(p.bn1, cache.bn1, spec.bn_momentum);
      detail::update_running(p.bn2, cache.bn2, spec.bn_momentum);
      if (!p.all_finite()) {
        throw DivergenceError("non-finite parameters at epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(bi + 1));
      }
    }
    r.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
  }
  return r;
}

inline Reaction predict_label(const NetParams& p, const NetSample& x) {
  const auto probs = forward(p, x);
  return probs[1] > probs[0] ? Reaction::Positive : Reaction::Negative;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

// Central differences of the train-mode (batch-statistics) loss against
// backprop, over every trainable parameter. Dropout must be disabled.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheckResult grad_check(const NetParams& params, std::span<const NetSample> batch, double step = 1e-5,
                                  double floor = 1e-6) {
  if (params.spec.dropout_rate != 0) throw ParameterError("gradient check needs dropout disabled");
  Cache cache;
  forward_batch(params, batch, Mode::train, nullptr, &cache);
  const NetParams g = backward(params, batch, cache);

  std::vector<const std::vector<double>*> grads;
  g.for_each_trainable([&](const std::string&, const std::vector<double>& v) { grads.push_back(&v); });
  NetParams probe = params;
  GradCheckResult r;
  std::size_t ti = 0;
  probe.for_each_trainable([&](const std::string& name, std::vector<double>& w) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + step;
      const double lp = cross_entropy(forward_batch(probe, batch, Mode::train), batch);
      w[i] = orig - step;
      const double lm = cross_entropy(forward_batch(probe, batch, Mode::train), batch);
      w[i] = orig;
      const double numeric = (lp - lm) / (2 * step);
      const double analytic = (*grads[ti])[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_tensor = name;
      }
      ++r.checked;
    }
    ++ti;
  });
  return r;
}

// ---------------------------------------------------------------------------
// Persistence: "NMK1" u8(kind=3), spec, tensors in trainable order, then
// running statistics.
// ---------------------------------------------------------------------------

inline std::string encode_params(const NetParams& p) {
  binio::Writer w;
  w.header(binio::PayloadKind::net);
  const auto& s = p.spec;
  w.u64(s.n_features);
  w.u64(s.dense_widths.size());
  for (auto d : s.dense_widths) w.u64(d);
  for (auto v : {s.conv1_kernels, s.conv2_kernels, s.kernel_size, s.head_width, s.signal_length, s.pool_width, s.batch_size}) w.u64(v);
  for (auto v : {s.dropout_rate, s.learning_rate, s.beta1, s.beta2, s.adam_eps, s.bn_momentum, s.bn_eps}) w.f64(v);
  w.i64(s.epochs);
  w.u64(s.seed);
  p.for_each_trainable([&](const std::string&, const std::vector<double>& v) { w.f64s(v); });
  for (const auto* bn : {&p.bn1, &p.bn2}) {
    w.f64s(bn->running_mean);
    w.f64s(bn->running_var);
  }
  return w.bytes();
}

inline NetParams decode_params(std::string_view bytes) {
  binio::Reader r(bytes);
  r.header(binio::PayloadKind::net);
  NetSpec s;
  s.n_features = r.u64();
  s.dense_widths.resize(r.count(8));
  for (auto& d : s.dense_widths) d = r.u64();
  for (auto* v : {&s.conv1_kernels, &s.conv2_kernels, &s.kernel_size, &s.head_width, &s.signal_length, &s.pool_width, &s.batch_size}) *v = r.u64();
  for (auto* v : {&s.dropout_rate, &s.learning_rate, &s.beta1, &s.beta2, &s.adam_eps, &s.bn_momentum, &s.bn_eps}) *v = r.f64();
  s.epochs = static_cast<int>(r.i64());
  s.seed = r.u64();
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw CorruptBundleError(std::string("network spec: ") + e.what());
  }
  NetParams p = init_params(s, 0);
  p.for_each_trainable([&](const std::string& name, std::vector<double>& v) {
    auto stored = r.f64s();
    if (stored.size() != v.size()) throw CorruptBundleError("tensor " + name + " has the wrong size");
    v = std::move(stored);
  });
  for (auto* bn : {&p.bn1, &p.bn2}) {
    auto m = r.f64s();
    auto v = r.f64s();
    if (m.size() != bn->running_mean.size() || v.size() != bn->running_var.size()) {
      throw CorruptBundleError("batch-norm statistics have the wrong size");
    }
    bn->running_mean = std::move(m);
    bn->running_var = std::move(v);
  }
  r.expect_end();
  return p;
}

inline void save_params(const NetParams& p, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_params(p));
}

inline NetParams load_params(const std::filesystem::path& path) { return decode_params(binio::read_file(path)); }

inline std::string loss_trace_csv(const TrainResult& r) {
  std::string out = "epoch,loss\n";
  out += "0," + ingest::detail::format_double(r.initial_loss) + "\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + ingest::detail::format_double(r.epoch_loss[e]) + "\n";
  }
  return out;
}

}  // namespace nmk::deepnet
