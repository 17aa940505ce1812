#pragma once

// Discrete wavelet transform (Mallat cascade) for the Daubechies-4 and
// Daubechies-7 orthogonal wavelets.
//
// Two boundary modes:
//  - symmetric: half-sample symmetric extension. Each level produces
//    floor((n + L - 1) / 2) coefficients, so the coefficient set is slightly
//    redundant near the edges. Coefficients match the common
//    "symmetric" convention (PyWavelets, MATLAB 'sym').
//  - periodic: circular extension of the (zero-padded to even) signal. Each
//    level produces ceil(n / 2) coefficients and the transform is orthogonal,
//    so coefficient energy equals signal energy exactly. For even lengths the
//    coefficients match PyWavelets' "periodization" mode; that mode pads odd
//    lengths by repeating the last sample instead, which breaks Parseval.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nmk/core.hpp"

namespace nmk::wavelet {

enum class Boundary { symmetric, periodic };

struct WaveletSpec {
  std::string name;
  std::vector<double> dec_lo;
  std::vector<double> dec_hi;
  std::vector<double> rec_lo;
  std::vector<double> rec_hi;

  std::size_t length() const { return dec_lo.size(); }
};

namespace detail {

// Analysis low-pass taps (decomposition order).
inline constexpr std::array<double, 8> kDb4 = {
    -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
    -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965};

inline constexpr std::array<double, 14> kDb7 = {
    0.00035371379997452024, -0.0018016407040474908, 0.0004295779729213665, 0.01255099855609984,
    -0.01657454163066688,   -0.03802993693501441,   0.08061260915108308,   0.07130921926683026,
    -0.22403618499387498,   -0.14390600392856498,   0.4697822874051931,    0.7291320908462351,
    0.3965393194819173,     0.07785205408500918};

inline WaveletSpec make_orthogonal(std::string name, std::span<const double> dec_lo) {
  const std::size_t n = dec_lo.size();
  WaveletSpec w;
  w.name = std::move(name);
  w.dec_lo.assign(dec_lo.begin(), dec_lo.end());
  w.dec_hi.resize(n);
  w.rec_lo.resize(n);
  w.rec_hi.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double sign = (k % 2 == 0) ? -1.0 : 1.0;
    w.dec_hi[k] = sign * dec_lo[n - 1 - k];
    w.rec_lo[k] = dec_lo[n - 1 - k];
  }
  for (std::size_t k = 0; k < n; ++k) w.rec_hi[k] = w.dec_hi[n - 1 - k];
  return w;
}

inline std::size_t reflect(std::ptrdiff_t k, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  auto m = k % period;
  if (m < 0) m += period;
  return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m)
                                            : static_cast<std::size_t>(period - 1 - m);
}

inline std::size_t wrap(std::ptrdiff_t k, std::size_t n) {
  auto m = k % static_cast<std::ptrdiff_t>(n);
  if (m < 0) m += static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(m);
}

}  // namespace detail

inline const WaveletSpec& db4() {
  static const WaveletSpec w = detail::make_orthogonal("db4", detail::kDb4);
  return w;
}

inline const WaveletSpec& db7() {
  static const WaveletSpec w = detail::make_orthogonal("db7", detail::kDb7);
  return w;
}

inline const WaveletSpec& by_name(const std::string& name) {
  if (name == "db4") return db4();
  if (name == "db7") return db7();
  throw ParameterError("unknown wavelet '" + name + "'");
}

// Max deviation from the orthogonal filter-bank identities: lowpass sums to
// sqrt(2), highpass to 0, unit norm, double-shift orthogonality.
inline double orthogonality_defect(const WaveletSpec& w) {
  double lo_sum = 0, hi_sum = 0;
  for (std::size_t k = 0; k < w.length(); ++k) {
    lo_sum += w.dec_lo[k];
    hi_sum += w.dec_hi[k];
  }
  double defect = std::max(std::abs(lo_sum - std::sqrt(2.0)), std::abs(hi_sum));
  const auto n = static_cast<std::ptrdiff_t>(w.length());
  for (std::ptrdiff_t shift = 0; shift < n; shift += 2) {
    double ll = 0, lh = 0;
    for (std::ptrdiff_t k = 0; k + shift < n; ++k) {
      ll += w.dec_lo[static_cast<std::size_t>(k)] * w.dec_lo[static_cast<std::size_t>(k + shift)];
      lh += w.dec_lo[static_cast<std::size_t>(k)] * w.dec_hi[static_cast<std::size_t>(k + shift)];
    }
    defect = std::max(defect, std::abs(ll - (shift == 0 ? 1.0 : 0.0)));
    defect = std::max(defect, std::abs(lh));
  }
  return defect;
}

struct DwtCoeffs {
  std::vector<std::vector<double>> details;  // D1 (finest) .. Dk
  std::vector<double> approximation;         // Ak
  int levels = 0;
  std::size_t original_length = 0;
  std::string wavelet;
  Boundary boundary = Boundary::symmetric;
  // Input length seen by each level (level 1 first).
  std::vector<std::size_t> level_lengths;

  double energy() const {
    double e = 0;
    for (const auto& d : details)
      for (double c : d) e += c * c;
    for (double c : approximation) e += c * c;
    return e;
  }
};

struct Split {
  std::vector<double> approx;
  std::vector<double> detail;
};

// One analysis step.
inline Split dwt_step(std::span<const double> x, const WaveletSpec& w, Boundary boundary) {
  const std::size_t L = w.length();
  const std::size_t n = x.size();
  Split out;
  if (boundary == Boundary::symmetric) {
    const std::size_t m = (n + L - 1) / 2;
    out.approx.resize(m);
    out.detail.resize(m);
    for (std::size_t o = 0; o < m; ++o) {
      double a = 0, d = 0;
      for (std::size_t j = 0; j < L; ++j) {
        const double v = x[detail::reflect(static_cast<std::ptrdiff_t>(2 * o + 1) - static_cast<std::ptrdiff_t>(j), n)];
        a += w.dec_lo[j] * v;
        d += w.dec_hi[j] * v;
      }
      out.approx[o] = a;
      out.detail[o] = d;
    }
  } else {
    // Odd lengths get one trailing zero, which keeps the step orthogonal.
    const std::size_t np = n + (n % 2);
    const std::size_t m = np / 2;
    out.approx.resize(m);
    out.detail.resize(m);
    for (std::size_t o = 0; o < m; ++o) {
      double a = 0, d = 0;
      for (std::size_t j = 0; j < L; ++j) {
        const std::size_t idx = detail::wrap(static_cast<std::ptrdiff_t>(2 * o + L / 2) - static_cast<std::ptrdiff_t>(j), np);
        const double v = idx < n ? x[idx] : 0.0;
        a += w.dec_lo[j] * v;
        d += w.dec_hi[j] * v;
      }
      out.approx[o] = a;
      out.detail[o] = d;
    }
  }
  return out;
}

// One synthesis step producing `out_length` samples.
inline std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> det,
                                     const WaveletSpec& w, Boundary boundary, std::size_t out_length) {
  if (approx.size() != det.size()) throw ShapeError("approximation/detail length mismatch");
  const std::size_t L = w.length();
  const std::size_t m = approx.size();
  std::vector<double> y(out_length, 0.0);
  if (boundary == Boundary::symmetric) {
    if (2 * m + 2 < L || out_length > 2 * m + 2 - L) throw ShapeError("coefficients too short for requested length");
    for (std::size_t t = 0; t < out_length; ++t) {
      double s = 0;
      // k = t + L - 2 - 2o must lie in [0, L)
      for (std::size_t o = 0; o < m; ++o) {
        const auto k = static_cast<std::ptrdiff_t>(t + L - 2) - static_cast<std::ptrdiff_t>(2 * o);
        if (k < 0) break;
        if (k >= static_cast<std::ptrdiff_t>(L)) continue;
        s += w.rec_lo[static_cast<std::size_t>(k)] * approx[o] + w.rec_hi[static_cast<std::size_t>(k)] * det[o];
      }
      y[t] = s;
    }
  } else {
    const std::size_t np = 2 * m;
    if (out_length > np || out_length + 1 < np) throw ShapeError("coefficients do not match requested length");
    std::vector<double> full(np, 0.0);
    for (std::size_t o = 0; o < m; ++o) {
      for (std::size_t j = 0; j < L; ++j) {
        const std::size_t idx = detail::wrap(static_cast<std::ptrdiff_t>(2 * o + L / 2) - static_cast<std::ptrdiff_t>(j), np);
        full[idx] += w.dec_lo[j] * approx[o] + w.dec_hi[j] * det[o];
      }
    }
    std::copy_n(full.begin(), out_length, y.begin());
  }
  return y;
}

inline DwtCoeffs decompose(std::span<const double> signal, const WaveletSpec& w, int levels,
                           Boundary boundary = Boundary::symmetric) {
  if (levels < 1) throw ShapeError("decomposition needs at least one level");
  if (signal.size() < w.length()) {
    throw ShapeError("signal of length " + std::to_string(signal.size()) + " shorter than " + w.name + " filter");
  }
  DwtCoeffs c;
  c.levels = levels;
  c.original_length = signal.size();
  c.wavelet = w.name;
  c.boundary = boundary;
  std::vector<double> current(signal.begin(), signal.end());
  for (int level = 1; level <= levels; ++level) {
    if (current.size() < 2) {
      throw ShapeError("signal of length " + std::to_string(signal.size()) + " too short for " +
                       std::to_string(levels) + " levels");
    }
    c.level_lengths.push_back(current.size());
    auto s = dwt_step(current, w, boundary);
    c.details.push_back(std::move(s.detail));
    current = std::move(s.approx);
  }
  c.approximation = std::move(current);
  return c;
}

inline std::vector<double> reconstruct(const DwtCoeffs& c, const WaveletSpec& w) {
  if (c.wavelet != w.name) throw ShapeError("coefficients were produced by " + c.wavelet + ", not " + w.name);
  if (c.levels < 1 || c.details.size() != static_cast<std::size_t>(c.levels) ||
      c.level_lengths.size() != static_cast<std::size_t>(c.levels)) {
    throw ShapeError("coefficient level count mismatch");
  }
  std::vector<double> current = c.approximation;
  for (int level = c.levels; level >= 1; --level) {
    const auto li = static_cast<std::size_t>(level - 1);
    current = idwt_step(current, c.details[li], w, c.boundary, c.level_lengths[li]);
  }
  return current;
}

// Energies of D1..D4 and A4, in that order.
inline std::array<double, 5> band_energies(const DwtCoeffs& c) {
  if (c.levels != 4 || c.details.size() != 4) throw ShapeError("band energies need a 4-level decomposition");
  std::array<double, 5> e{};
  for (std::size_t b = 0; b < 4; ++b)
    for (double v : c.details[b]) e[b] += v * v;
  for (double v : c.approximation) e[4] += v * v;
  return e;
}

}  // namespace nmk::wavelet
