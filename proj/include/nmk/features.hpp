#pragma once

// The 10-element feature vector per recording and MinMax scaling.
//
//   0 d1_gamma_energy   DWT(db4, 4 levels) detail energies ...
//   1 d2_beta_energy
//   2 d3_alpha_energy
//   3 d4_theta_energy
//   4 a4_delta_energy   ... and approximation energy
//   5 psd_energy        integral of the Welch PSD
//   6 hjorth_mobility
//   7 hjorth_complexity
//   8 dfa_alpha         DFA-1 scaling exponent
//   9 attention_mean    mean of the headset attention stream
//
// The band names follow the conventional labelling of the five DWT bands;
// at 512 Hz the bands actually span D1 128-256, D2 64-128, D3 32-64,
// D4 16-32 and A4 0-16 Hz.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmk/core.hpp"
#include "nmk/ingest.hpp"
#include "nmk/wavelet.hpp"

namespace nmk::features {

inline constexpr std::size_t kNumFeatures = 10;

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "d1_gamma_energy", "d2_beta_energy",  "d3_alpha_energy", "d4_theta_energy",   "a4_delta_energy",
    "psd_energy",      "hjorth_mobility", "hjorth_complexity", "dfa_alpha", "attention_mean"};

struct FeatureVector {
  std::array<double, kNumFeatures> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double d1_gamma_energy() const { return values[0]; }
  double d2_beta_energy() const { return values[1]; }
  double d3_alpha_energy() const { return values[2]; }
  double d4_theta_energy() const { return values[3]; }
  double a4_delta_energy() const { return values[4]; }
  double psd_energy() const { return values[5]; }
  double hjorth_mobility() const { return values[6]; }
  double hjorth_complexity() const { return values[7]; }
  double dfa_alpha() const { return values[8]; }
  double attention_mean() const { return values[9]; }

  bool operator==(const FeatureVector&) const = default;
};

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct WelchConfig {
  std::size_t segment = 256;
  std::size_t overlap = 128;
};

struct Psd {
  std::vector<double> frequencies;
  std::vector<double> power;  // one-sided density, units^2 / Hz
  double df = 0;

  double total_power() const {
    double s = 0;
    for (double p : power) s += p * df;
    return s;
  }
};

// Averaged periodogram over Hann-windowed (periodic Hann) segments.
// Normalized so that sum(psd) * df approximates the mean square of x.
inline Psd welch_psd(std::span<const double> x, double sample_rate, const WelchConfig& cfg = {}) {
  const std::size_t m = cfg.segment;
  if (m == 0 || (m & (m - 1)) != 0) throw ParameterError("Welch segment length must be a power of two");
  if (cfg.overlap >= m) throw ParameterError("Welch overlap must be smaller than the segment");
  if (x.size() < m) {
    throw ShapeError("signal of length " + std::to_string(x.size()) + " shorter than Welch segment " + std::to_string(m));
  }
  std::vector<double> window(m);
  double wss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m));
    wss += window[i] * window[i];
  }
  const std::size_t step = m - cfg.overlap;
  const std::size_t nseg = (x.size() - m) / step + 1;
  const std::size_t nbins = m / 2 + 1;

  Psd out;
  out.df = sample_rate / static_cast<double>(m);
  out.power.assign(nbins, 0.0);
  out.frequencies.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) out.frequencies[k] = static_cast<double>(k) * out.df;

  std::vector<std::complex<double>> buf(m);
  for (std::size_t s = 0; s < nseg; ++s) {
    for (std::size_t i = 0; i < m; ++i) buf[i] = x[s * step + i] * window[i];
    fft(buf);
    for (std::size_t k = 0; k < nbins; ++k) out.power[k] += std::norm(buf[k]);
  }
  const double scale = 1.0 / (sample_rate * wss * static_cast<double>(nseg));
  for (std::size_t k = 0; k < nbins; ++k) {
    out.power[k] *= scale;
    if (k != 0 && k != nbins - 1) out.power[k] *= 2.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hjorth
// ---------------------------------------------------------------------------

namespace detail {
inline double variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size());
}

inline std::vector<double> diff(std::span<const double> x) {
  if (x.size() < 2) return {};
  std::vector<double> d(x.size() - 1);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) d[i] = x[i + 1] - x[i];
  return d;
}
}  // namespace detail

struct Hjorth {
  double mobility = 0;
  double complexity = 0;
};

inline Hjorth hjorth(std::span<const double> y) {
  const auto dy = detail::diff(y);
  const auto ddy = detail::diff(dy);
  const double v0 = detail::variance(y);
  const double v1 = detail::variance(dy);
  const double v2 = detail::variance(ddy);
  if (!(v0 > 0) || !(v1 > 0) || !(v2 > 0)) {
    throw DegenerateInputError("Hjorth parameters undefined for a constant or linear signal");
  }
  const double mob = std::sqrt(v1 / v0);
  const double mob_d = std::sqrt(v2 / v1);
  return {mob, mob_d / mob};
}

// ---------------------------------------------------------------------------
// DFA
// ---------------------------------------------------------------------------

// `count` log-spaced integer box sizes in [lo, hi], duplicates removed.
inline std::vector<std::size_t> log_box_sizes(std::size_t lo, std::size_t hi, std::size_t count) {
  std::vector<std::size_t> out;
  if (lo < 2 || hi < lo || count == 0) return out;
  const double a = std::log(static_cast<double>(lo));
  const double b = std::log(static_cast<double>(hi));
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    const auto n = static_cast<std::size_t>(std::llround(std::exp(a + t * (b - a))));
    if (out.empty() || out.back() != n) out.push_back(n);
  }
  return out;
}

inline std::vector<std::size_t> default_box_sizes(std::size_t n) {
  return log_box_sizes(4, n / 4, 16);
}

struct DfaResult {
  std::vector<std::size_t> box_sizes;
  std::vector<double> fluctuation;
  double alpha = 0;
};

// Fluctuation F(n) of the profile after a least-squares line is removed from
// each non-overlapping box of size n.
inline double dfa_fluctuation(std::span<const double> profile, std::size_t n) {
  const std::size_t boxes = profile.size() / n;
  // Centred abscissa: sum(t) = 0, so slope and intercept decouple.
  const double tmean = (static_cast<double>(n) - 1.0) / 2.0;
  double stt = 0;
  for (std::size_t t = 0; t < n; ++t) stt += (static_cast<double>(t) - tmean) * (static_cast<double>(t) - tmean);
  double sum_sq = 0;
  for (std::size_t b = 0; b < boxes; ++b) {
    const double* seg = profile.data() + b * n;
    double sy = 0, sty = 0;
    for (std::size_t t = 0; t < n; ++t) {
      sy += seg[t];
      sty += (static_cast<double>(t) - tmean) * seg[t];
    }
    const double mean = sy / static_cast<double>(n);
    const double slope = sty / stt;
    for (std::size_t t = 0; t < n; ++t) {
      const double r = seg[t] - (mean + slope * (static_cast<double>(t) - tmean));
      sum_sq += r * r;
    }
  }
  return std::sqrt(sum_sq / static_cast<double>(boxes * n));
}

inline DfaResult dfa_detail(std::span<const double> x, std::vector<std::size_t> box_sizes = {}) {
  if (box_sizes.empty()) box_sizes = default_box_sizes(x.size());
  std::vector<std::size_t> valid;
  for (auto n : box_sizes) {
    if (n >= 3 && 4 * n <= x.size()) valid.push_back(n);
  }
  if (valid.size() < 4) throw ParameterError("DFA needs at least 4 valid box sizes");

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double spread = 0;
  for (double v : x) spread = std::max(spread, std::abs(v - mean));
  if (!(spread > 1e-12 * std::max(std::abs(mean), std::numeric_limits<double>::min()))) {
    throw DegenerateInputError("DFA undefined for a constant signal");
  }
  std::vector<double> profile(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] - mean;
    profile[i] = acc;
  }

  DfaResult r;
  r.box_sizes = valid;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto n : valid) {
    const double f = dfa_fluctuation(profile, n);
    if (!(f > 0)) throw DegenerateInputError("DFA fluctuation is zero at box size " + std::to_string(n));
    r.fluctuation.push_back(f);
    const double lx = std::log(static_cast<double>(n));
    const double ly = std::log(f);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(valid.size());
  r.alpha = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return r;
}

inline double dfa(std::span<const double> x, std::vector<std::size_t> box_sizes = {}) {
  return dfa_detail(x, std::move(box_sizes)).alpha;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

struct ExtractConfig {
  WelchConfig welch{};
  wavelet::Boundary boundary = wavelet::Boundary::symmetric;
  std::size_t min_samples = kSamplesPerAd;
};

inline double attention_mean(const Recording& rec) {
  if (rec.attention.empty()) throw DegenerateInputError("recording has no attention values");
  double s = 0;
  for (int a : rec.attention) s += a;
  return s / static_cast<double>(rec.attention.size());
}

// Expects a preprocessed recording.
inline FeatureVector extract(const Recording& rec, const ExtractConfig& cfg = {}) {
  ingest::validate_for_features(rec, cfg.min_samples);
  FeatureVector fv;
  const auto coeffs = wavelet::decompose(rec.samples, wavelet::db4(), 4, cfg.boundary);
  const auto e = wavelet::band_energies(coeffs);
  for (std::size_t i = 0; i < 5; ++i) fv[i] = e[i];
  fv[5] = welch_psd(rec.samples, rec.sample_rate, cfg.welch).total_power();
  const auto h = hjorth(rec.samples);
  fv[6] = h.mobility;
  fv[7] = h.complexity;
  fv[8] = dfa(rec.samples);
  fv[9] = attention_mean(rec);
  return fv;
}

// ---------------------------------------------------------------------------
// MinMax scaling
// ---------------------------------------------------------------------------

struct ScalerParams {
  std::array<double, kNumFeatures> min{};
  std::array<double, kNumFeatures> max{};
  bool operator==(const ScalerParams&) const = default;
};

inline ScalerParams fit_scaler(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) throw ShapeError("cannot fit a scaler on an empty set");
  ScalerParams p;
  p.min = vectors.front().values;
  p.max = vectors.front().values;
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      p.min[i] = std::min(p.min[i], v[i]);
      p.max[i] = std::max(p.max[i], v[i]);
    }
  }
  return p;
}

// No clamping: unseen data may fall outside [0, 1]. Constant features map to 0.
inline FeatureVector apply_scaler(const ScalerParams& p, const FeatureVector& v) {
  FeatureVector out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const double range = p.max[i] - p.min[i];
    out[i] = range > 0 ? (v[i] - p.min[i]) / range : 0.0;
  }
  return out;
}

inline std::vector<FeatureVector> apply_scaler(const ScalerParams& p, std::span<const FeatureVector> vs) {
  std::vector<FeatureVector> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(apply_scaler(p, v));
  return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

// Header row, one row per vector, reaction label in the last column.
inline std::string feature_csv(std::span<const FeatureVector> vectors, std::span<const Reaction> labels) {
  if (vectors.size() != labels.size()) throw ShapeError("feature/label count mismatch");
  std::string out;
  for (auto name : kFeatureNames) {
    out += name;
    out += ',';
  }
  out += "label\n";
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      out += ingest::detail::format_double(vectors[r][i]);
      out += ',';
    }
    out += to_string(labels[r]);
    out += '\n';
  }
  return out;
}

}  // namespace nmk::features
