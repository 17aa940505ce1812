#pragma once

// IIR filter design (Butterworth bandpass, second-order notch) as
// second-order sections, and causal / zero-phase application.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nmk/core.hpp"

namespace nmk::filter {

// a0 is normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

enum class FilterKind { butterworth_bandpass, iir_notch };

struct FilterSpec {
  FilterKind kind = FilterKind::butterworth_bandpass;
  int order = 4;            // prototype order for the bandpass (2*order poles)
  double low_hz = 0.5;      // bandpass lower edge, or notch centre
  double high_hz = 50.0;    // bandpass upper edge (unused by the notch)
  double q_factor = 30.0;   // notch only
  double sample_rate = kSampleRate;

  static FilterSpec bandpass(double low, double high, int order = 4, double fs = kSampleRate) {
    return {FilterKind::butterworth_bandpass, order, low, high, 0.0, fs};
  }
  static FilterSpec notch(double centre, double q = 30.0, double fs = kSampleRate) {
    return {FilterKind::iir_notch, 2, centre, 0.0, q, fs};
  }

  void validate() const {
    const double nyq = sample_rate / 2;
    if (!(sample_rate > 0)) throw ParameterError("sample rate must be positive");
    if (kind == FilterKind::butterworth_bandpass) {
      if (order < 1) throw ParameterError("filter order must be >= 1");
      if (!(low_hz > 0)) throw ParameterError("low cutoff must be > 0 Hz");
      if (!(high_hz > low_hz)) throw ParameterError("high cutoff must exceed low cutoff");
      if (!(high_hz < nyq)) {
        throw ParameterError("cutoff " + std::to_string(high_hz) + " Hz at or above Nyquist " + std::to_string(nyq) + " Hz");
      }
    } else {
      if (!(low_hz > 0 && low_hz < nyq)) {
        throw ParameterError("notch frequency " + std::to_string(low_hz) + " Hz outside (0, Nyquist)");
      }
      if (!(q_factor > 0)) throw ParameterError("notch Q must be positive");
    }
  }
};

// Butterworth bandpass by bilinear transform with prewarped band edges.
// Unity gain at the (digital image of the) geometric centre frequency.
inline Sos design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  FilterSpec::bandpass(low_hz, high_hz, order, fs).validate();
  using cd = std::complex<double>;
  const double k = 2.0 * fs;
  const double w1 = k * std::tan(std::numbers::pi * low_hz / fs);
  const double w2 = k * std::tan(std::numbers::pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cd> zpoles;
  for (int i = 0; i < order; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order);
    const cd p = std::polar(1.0, theta);
    const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    for (const cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      zpoles.push_back((k + s) / (k - s));
    }
  }

  Sos sos;
  for (const cd& z : zpoles) {
    if (z.imag() > 0) sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  if (sos.size() != static_cast<std::size_t>(order)) {
    throw ParameterError("band too wide for a complex-pole bandpass design");
  }

  const double wc = 2.0 * std::atan(std::sqrt(w0sq) / k);
  const cd zc = std::polar(1.0, wc);
  cd h = 1.0;
  for (const auto& s : sos) {
    const cd zi = 1.0 / zc;
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  const double g = std::pow(1.0 / std::abs(h), 1.0 / order);
  for (auto& s : sos) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return sos;
}

// Second-order notch with -3 dB bandwidth centre/Q.
inline Biquad design_notch(double centre_hz, double q, double fs) {
  FilterSpec::notch(centre_hz, q, fs).validate();
  const double w0 = 2.0 * centre_hz / fs;
  const double bw = w0 / q;
  const double beta = std::tan(bw * std::numbers::pi / 2.0);
  const double gain = 1.0 / (1.0 + beta);
  const double c = std::cos(w0 * std::numbers::pi);
  return {gain, -2.0 * c * gain, gain, -2.0 * gain * c, 2.0 * gain - 1.0};
}

inline Sos design(const FilterSpec& spec) {
  spec.validate();
  if (spec.kind == FilterKind::butterworth_bandpass) {
    return design_butterworth_bandpass(spec.order, spec.low_hz, spec.high_hz, spec.sample_rate);
  }
  return {design_notch(spec.low_hz, spec.q_factor, spec.sample_rate)};
}

// Complex frequency response of the cascade at freq_hz.
inline std::complex<double> response(const Sos& sos, double freq_hz, double fs) {
  const std::complex<double> zi = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  return h;
}

// Direct-form II transposed. `state` holds two values per section.
inline std::vector<double> sosfilt(const Sos& sos, std::span<const double> x, std::vector<double>& state) {
  state.resize(2 * sos.size(), 0.0);
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t si = 0; si < sos.size(); ++si) {
    const auto& s = sos[si];
    double z1 = state[2 * si], z2 = state[2 * si + 1];
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    state[2 * si] = z1;
    state[2 * si + 1] = z2;
  }
  return y;
}

inline std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> state;
  return sosfilt(sos, x, state);
}

// Section states giving a steady-state response to a unit step.
inline std::vector<double> step_initial_state(const Sos& sos) {
  std::vector<double> zi;
  double scale = 1.0;
  for (const auto& s : sos) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    zi.push_back(scale * (g - s.b0));
    zi.push_back(scale * (s.b2 - s.a2 * g));
    scale *= g;
  }
  return zi;
}

// Zero-phase forward-backward filtering with odd extension at both ends and
// step-steady-state initial conditions. The effective magnitude response is
// |H|^2.
inline std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t pad = 3 * (2 * sos.size() + 1);
  pad = std::min(pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_initial_state(sos);
  auto state = zi;
  for (auto& v : state) v *= ext.front();
  auto y = sosfilt(sos, ext, state);

  std::reverse(y.begin(), y.end());
  state = zi;
  for (auto& v : state) v *= y.front();
  y = sosfilt(sos, y, state);
  std::reverse(y.begin(), y.end());

  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                             y.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

}  // namespace nmk::filter
