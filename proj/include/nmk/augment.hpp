#pragma once

// Zero-mean Gaussian-noise augmentation of raw recordings.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "nmk/core.hpp"
#include "nmk/rng.hpp"

namespace nmk::augment {

// Originals followed by five copies gives the six-fold training volume.
inline const std::vector<double>& default_fractions() {
  static const std::vector<double> f = {0.05, 0.10, 0.15, 0.20, 0.25};
  return f;
}

inline double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Copy `copy` (1-based) of `original` with noise std = fraction * std(original).
inline Recording noisy_copy(const Recording& original, double fraction, int copy, std::uint64_t seed) {
  const double sd = stddev(original.samples);
  if (!(sd > 0)) throw DegenerateInputError("cannot augment a zero-variance recording");
  Rng rng(seed);
  Recording out = original;
  out.provenance = Provenance::augmented;
  out.copy_index = copy;
  for (auto& v : out.samples) v += rng.normal(0.0, fraction * sd);
  return out;
}

// Every original, each followed by its k noisy copies. Copy i of original j
// uses a sub-seed derived from (seed, j, i), so the result does not depend on
// processing order.
inline std::vector<Recording> augment(std::span<const Recording> recordings, int copies,
                                      std::span<const double> noise_fractions, std::uint64_t seed) {
  if (copies < 0 || static_cast<std::size_t>(copies) != noise_fractions.size()) {
    throw ParameterError("need exactly one noise fraction per copy");
  }
  for (double f : noise_fractions) {
    if (!(f > 0)) throw ParameterError("noise fractions must be positive");
  }
  std::vector<Recording> out;
  out.reserve(recordings.size() * static_cast<std::size_t>(copies + 1));
  for (std::size_t j = 0; j < recordings.size(); ++j) {
    out.push_back(recordings[j]);
    for (int i = 1; i <= copies; ++i) {
      out.push_back(noisy_copy(recordings[j], noise_fractions[static_cast<std::size_t>(i - 1)], i,
                               derive_seed(seed, {j, static_cast<std::uint64_t>(i)})));
    }
  }
  return out;
}

inline std::vector<Recording> augment(std::span<const Recording> recordings, std::uint64_t seed) {
  const auto& f = default_fractions();
  return augment(recordings, static_cast<int>(f.size()), f, seed);
}

}  // namespace nmk::augment
