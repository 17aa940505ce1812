#pragma once

// Recording clean-up chain: DC removal, 0.5-50 Hz bandpass, 50 Hz notch,
// 6-level db7 wavelet denoising.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "nmk/core.hpp"
#include "nmk/filter.hpp"
#include "nmk/wavelet.hpp"

namespace nmk::preprocess {

using filter::FilterSpec;

inline std::vector<double> remove_dc(std::span<const double> x) {
  if (x.empty()) throw ShapeError("cannot remove DC from an empty signal");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [mean](double v) { return v - mean; });
  return y;
}

inline std::vector<double> bandpass(std::span<const double> x, const FilterSpec& spec) {
  if (spec.kind != filter::FilterKind::butterworth_bandpass) throw ParameterError("bandpass needs a bandpass spec");
  return filter::sosfiltfilt(filter::design(spec), x);
}

inline std::vector<double> notch(std::span<const double> x, const FilterSpec& spec) {
  if (spec.kind != filter::FilterKind::iir_notch) throw ParameterError("notch needs a notch spec");
  return filter::sosfiltfilt(filter::design(spec), x);
}

struct DenoiseConfig {
  const wavelet::WaveletSpec* wavelet = &wavelet::db7();
  int levels = 6;
  // Orthogonal boundary handling: soft shrinkage then never adds energy.
  wavelet::Boundary boundary = wavelet::Boundary::periodic;
};

inline double median_abs(std::vector<double> v) {
  for (auto& x : v) x = std::abs(x);
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = (m + *std::max_element(v.begin(), mid)) / 2.0;
  return m;
}

inline double soft_threshold(double x, double t) {
  const double a = std::abs(x) - t;
  return a > 0 ? std::copysign(a, x) : 0.0;
}

// Universal-threshold soft shrinkage of every detail band. The noise level
// is estimated from the finest band: sigma = median(|D1|) / 0.6745, and the
// threshold is sigma * sqrt(2 ln N).
inline std::vector<double> denoise(std::span<const double> x, const DenoiseConfig& cfg = {}) {
  auto c = wavelet::decompose(x, *cfg.wavelet, cfg.levels, cfg.boundary);
  const double sigma = median_abs(c.details.front()) / 0.6745;
  const double t = sigma * std::sqrt(2.0 * std::log(static_cast<double>(x.size())));
  for (auto& band : c.details)
    for (auto& v : band) v = soft_threshold(v, t);
  return wavelet::reconstruct(c, *cfg.wavelet);
}

struct ChainConfig {
  FilterSpec bandpass = FilterSpec::bandpass(0.5, 50.0, 4);
  FilterSpec notch = FilterSpec::notch(50.0, 30.0);
  bool denoise = true;
  DenoiseConfig denoise_cfg{};
};

// Linear part of the chain (DC, bandpass, notch).
inline std::vector<double> filter_chain(std::span<const double> x, const ChainConfig& cfg = {}) {
  auto y = remove_dc(x);
  y = bandpass(y, cfg.bandpass);
  return notch(y, cfg.notch);
}

inline std::vector<double> chain(std::span<const double> x, const ChainConfig& cfg = {}) {
  auto y = filter_chain(x, cfg);
  if (cfg.denoise) y = denoise(y, cfg.denoise_cfg);
  return y;
}

// Meta and side channels pass through untouched.
inline Recording preprocess_chain(const Recording& rec, const ChainConfig& cfg = {}) {
  if (rec.sample_rate != cfg.bandpass.sample_rate || rec.sample_rate != cfg.notch.sample_rate) {
    throw ParameterError("filter sample rate does not match recording");
  }
  Recording out = rec;
  out.samples = chain(rec.samples, cfg);
  return out;
}

}  // namespace nmk::preprocess
