#pragma once

// Independent references shared by the unit tests and the acceptance run:
// closed-form filter responses and brute-force classifiers. None of them
// call into the library's designs or solvers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <set>

#include "nmk/classify.hpp"

namespace nmk::test::oracle {

using classify::Labels;
using classify::Matrix;

// ----- filters -----

// Analog-prototype magnitude of an order-N Butterworth bandpass mapped by the
// bilinear transform with prewarped edges:
//   |H|^2 = 1 / (1 + ((W^2 - W0^2) / (B W))^(2N)),  W = 2 fs tan(pi f / fs).
inline double butterworth_bandpass_magnitude(double f, double lo, double hi, int order, double fs = kSampleRate) {
  auto warp = [fs](double hz) { return 2 * fs * std::tan(std::numbers::pi * hz / fs); };
  const double w = warp(f), wl = warp(lo), wh = warp(hi);
  const double ratio = (w * w - wl * wh) / ((wh - wl) * w);
  return 1.0 / std::sqrt(1.0 + std::pow(ratio * ratio, order));
}

// Second-order notch written out from its transfer function
//   H(z) = g (1 - 2 cos w0 z^-1 + z^-2) / (1 - 2 g cos w0 z^-1 + (2 g - 1) z^-2),
//   g = 1 / (1 + tan(w0 / (2 Q))).
inline double notch_magnitude(double f, double f0, double q, double fs = kSampleRate) {
  const double w0 = 2 * std::numbers::pi * f0 / fs;
  const double g = 1.0 / (1.0 + std::tan(w0 / (2 * q)));
  const std::complex<double> z1 = std::polar(1.0, -2 * std::numbers::pi * f / fs);
  const auto num = g * (1.0 - 2.0 * std::cos(w0) * z1 + z1 * z1);
  const auto den = 1.0 - 2.0 * g * std::cos(w0) * z1 + (2.0 * g - 1.0) * z1 * z1;
  return std::abs(num / den);
}

// ----- classifiers -----

struct Data {
  Matrix X;
  Labels y;
};

// Two Gaussian clouds in `dim` dimensions, shifted apart by `gap` on every axis.
inline Data clouds(std::uint64_t seed, std::size_t n, std::size_t dim, double gap) {
  Rng rng(seed);
  Data d{Matrix(dim), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 1;
    std::vector<double> r(dim);
    for (auto& v : r) v = rng.normal(pos ? gap : 0.0, 1.0);
    d.X.push_row(r);
    d.y.push_back(pos ? Reaction::Positive : Reaction::Negative);
  }
  return d;
}

inline Matrix probes(std::uint64_t seed, std::size_t n, std::size_t dim, double lo, double hi) {
  Rng rng(seed);
  Matrix m(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(dim);
    for (auto& v : r) v = rng.uniform(lo, hi);
    m.push_row(r);
  }
  return m;
}

inline double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// ----- oracles -----

inline Reaction knn_oracle(const Data& d, std::span<const double> x, std::size_t k) {
  std::vector<std::size_t> order(d.X.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist2(d.X.row(a), x) < dist2(d.X.row(b), x); });
  int pos = 0, neg = 0;
  double dpos = 0, dneg = 0;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    const double dd = std::sqrt(dist2(d.X.row(order[i]), x));
    if (d.y[order[i]] == Reaction::Positive) {
      ++pos;
      dpos += dd;
    } else {
      ++neg;
      dneg += dd;
    }
  }
  if (pos != neg) return pos > neg ? Reaction::Positive : Reaction::Negative;
  return dpos < dneg ? Reaction::Positive : Reaction::Negative;
}

inline Reaction nb_oracle(const Data& d, std::span<const double> x) {
  double best = -1e300;
  Reaction out = Reaction::Negative;
  for (Reaction c : {Reaction::Negative, Reaction::Positive}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < d.y.size(); ++i)
      if (d.y[i] == c) members.push_back(i);
    double lp = std::log(static_cast<double>(members.size()) / static_cast<double>(d.y.size()));
    for (std::size_t f = 0; f < x.size(); ++f) {
      double mu = 0, var = 0;
      for (auto i : members) mu += d.X.row(i)[f];
      mu /= static_cast<double>(members.size());
      for (auto i : members) var += (d.X.row(i)[f] - mu) * (d.X.row(i)[f] - mu);
      var = std::max(var / static_cast<double>(members.size()), 1e-9);
      lp += std::log(1.0 / std::sqrt(2 * std::numbers::pi * var)) - (x[f] - mu) * (x[f] - mu) / (2 * var);
    }
    if (lp > best) {
      best = lp;
      out = c;
    }
  }
  return out;
}

// Exhaustive CART: for each feature, every midpoint between distinct sorted
// values; strictly larger impurity decrease wins, so ties keep the lowest
// feature and threshold.
struct OracleTree {
  const Data& d;
  int max_depth;

  double impurity(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) return 0;
    double p = 0;
    for (auto i : idx) p += d.y[i] == Reaction::Positive;
    p /= static_cast<double>(idx.size());
    return 2 * p * (1 - p);
  }

  Reaction classify(const std::vector<std::size_t>& idx, std::span<const double> x, int depth) const {
    std::size_t pos = 0;
    for (auto i : idx) pos += d.y[i] == Reaction::Positive;
    const Reaction majority = 2 * pos > idx.size() ? Reaction::Positive : Reaction::Negative;
    if (depth >= max_depth || pos == 0 || pos == idx.size()) return majority;
    double best_gain = -1e300, best_t = 0;
    int best_f = -1;
    const double parent = impurity(idx);
    for (std::size_t f = 0; f < d.X.cols(); ++f) {
      std::set<double> values;
      for (auto i : idx) values.insert(d.X.row(i)[f]);
      for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
        const double t = *it + (*std::next(it) - *it) / 2;
        std::vector<std::size_t> l, r;
        for (auto i : idx) (d.X.row(i)[f] <= t ? l : r).push_back(i);
        const double n = static_cast<double>(idx.size());
        const double gain = parent - (static_cast<double>(l.size()) * impurity(l) + static_cast<double>(r.size()) * impurity(r)) / n;
        if (gain > best_gain + classify::detail::kGainTieEps) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_t = t;
        }
      }
    }
    if (best_f < 0) return majority;
    std::vector<std::size_t> l, r;
    for (auto i : idx) (d.X.row(i)[static_cast<std::size_t>(best_f)] <= best_t ? l : r).push_back(i);
    return classify(x[static_cast<std::size_t>(best_f)] <= best_t ? l : r, x, depth + 1);
  }

  Reaction operator()(std::span<const double> x) const {
    std::vector<std::size_t> idx(d.X.rows());
    std::iota(idx.begin(), idx.end(), 0);
    return classify(idx, x, 0);
  }
};

// Platt's simplified SMO with random partner choice, run to a tight
// tolerance; independent of the library's maximal-violating-pair solver.
struct OracleSvm {
  std::vector<double> alpha;
  double b = 0;
  const Data& d;
  double C, gamma;

  double k(std::size_t i, std::size_t j) const { return std::exp(-gamma * dist2(d.X.row(i), d.X.row(j))); }
  double f(std::span<const double> x) const {
    double s = b;
    for (std::size_t i = 0; i < alpha.size(); ++i)
      if (alpha[i] > 0) s += alpha[i] * test_sign(i) * std::exp(-gamma * dist2(d.X.row(i), x));
    return s;
  }
  double test_sign(std::size_t i) const { return d.y[i] == Reaction::Positive ? 1.0 : -1.0; }

  OracleSvm(const Data& data, double C_, double gamma_) : d(data), C(C_), gamma(gamma_) {
    const std::size_t n = d.y.size();
    alpha.assign(n, 0.0);
    Rng rng(99);
    const double tol = 1e-6;
    int passes = 0;
    while (passes < 50) {
      int changed = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double yi = test_sign(i);
        const double Ei = f(d.X.row(i)) - yi;
        if (!((yi * Ei < -tol && alpha[i] < C) || (yi * Ei > tol && alpha[i] > 0))) continue;
        std::size_t j = rng.index(n - 1);
        if (j >= i) ++j;
        const double yj = test_sign(j);
        const double Ej = f(d.X.row(j)) - yj;
        const double ai = alpha[i], aj = alpha[j];
        const double L = yi != yj ? std::max(0.0, aj - ai) : std::max(0.0, ai + aj - C);
        const double H = yi != yj ? std::min(C, C + aj - ai) : std::min(C, ai + aj);
        if (L >= H) continue;
        const double eta = 2 * k(i, j) - k(i, i) - k(j, j);
        if (eta >= 0) continue;
        alpha[j] = std::clamp(aj - yj * (Ei - Ej) / eta, L, H);
        if (std::abs(alpha[j] - aj) < 1e-12) continue;
        alpha[i] = ai + yi * yj * (aj - alpha[j]);
        const double b1 = b - Ei - yi * (alpha[i] - ai) * k(i, i) - yj * (alpha[j] - aj) * k(i, j);
        const double b2 = b - Ej - yi * (alpha[i] - ai) * k(i, j) - yj * (alpha[j] - aj) * k(j, j);
        b = (alpha[i] > 0 && alpha[i] < C) ? b1 : (alpha[j] > 0 && alpha[j] < C) ? b2 : (b1 + b2) / 2;
        ++changed;
      }
      passes = changed == 0 ? passes + 1 : 0;
    }
  }
};

}  // namespace nmk::test::oracle
