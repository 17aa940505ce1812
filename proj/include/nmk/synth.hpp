#pragma once

// Deterministic synthetic EEG sessions in the acquisition layout: per
// subject 5 products x 4 brands x 4 ad types, 7 s at 512 Hz per ad.
//
// A recording is the sum of five band-limited Gaussian noise components
// (delta 0.5-4, theta 4-8, alpha 8-16, beta 16-32, gamma 32-50 Hz) plus
// white noise. Band components are white noise passed through the same
// zero-phase Butterworth bandpass used for preprocessing, scaled so their
// mean power equals the requested band power. Class structure is planted by
// interpolating between the negative and positive band profiles with the
// separability factor; at separability 0 both classes share the negative
// profile.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nmk/core.hpp"
#include "nmk/features.hpp"
#include "nmk/filter.hpp"
#include "nmk/ingest.hpp"
#include "nmk/rng.hpp"

namespace nmk::synth {

inline constexpr std::size_t kBands = 5;
inline constexpr std::array<const char*, kBands> kBandNames = {"delta", "theta", "alpha", "beta", "gamma"};
inline constexpr std::array<std::array<double, 2>, kBands> kBandEdges = {
    {{0.5, 4.0}, {4.0, 8.0}, {8.0, 16.0}, {16.0, 32.0}, {32.0, 50.0}}};

using BandPowers = std::array<double, kBands>;  // delta, theta, alpha, beta, gamma

struct SynthSpec {
  int n_subjects = 13;
  std::uint64_t seed = 1;
  // Default profiles share total power and differ in alpha/theta ratio.
  BandPowers negative_profile = {4.0, 4.0, 1.0, 1.0, 0.5};
  BandPowers positive_profile = {4.0, 1.0, 4.0, 1.0, 0.5};
  double noise_floor = 0.05;  // white-noise power
  double attention_mean_negative = 50.0;
  double attention_mean_positive = 50.0;
  double attention_std = 10.0;
  double meditation_mean = 50.0;
  double separability = 1.0;  // in [0, 1]
  // Subjects [0, n_males) are male; -1 selects 5 of every 13.
  int n_males = -1;
  std::size_t samples = kSamplesPerAd;
  double side_channel_rate = 1.0;  // Hz

  void validate() const {
    if (n_subjects < 0) throw ParameterError("n_subjects must be non-negative");
    if (!(separability >= 0 && separability <= 1)) throw ParameterError("separability must lie in [0, 1]");
    for (double p : negative_profile) if (!(p >= 0)) throw ParameterError("band powers must be >= 0");
    for (double p : positive_profile) if (!(p >= 0)) throw ParameterError("band powers must be >= 0");
    if (!(noise_floor >= 0)) throw ParameterError("noise floor must be >= 0");
    if (samples < 16) throw ParameterError("synthetic recordings need at least 16 samples");
    if (!(side_channel_rate > 0)) throw ParameterError("side-channel rate must be positive");
  }

  int males() const { return n_males >= 0 ? n_males : static_cast<int>(std::lround(n_subjects * 5.0 / 13.0)); }

  BandPowers profile(Reaction r) const {
    if (r == Reaction::Negative) return negative_profile;
    BandPowers p{};
    for (std::size_t b = 0; b < kBands; ++b) {
      p[b] = negative_profile[b] + separability * (positive_profile[b] - negative_profile[b]);
    }
    return p;
  }
  double attention_mean(Reaction r) const {
    return r == Reaction::Negative
               ? attention_mean_negative
               : attention_mean_negative + separability * (attention_mean_positive - attention_mean_negative);
  }
};

inline std::string subject_name(int i) {
  std::string s = std::to_string(i + 1);
  return "S" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

inline std::vector<double> white_noise(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  return w;
}

// Band filters with gains that bring unit-variance white noise to unit power.
struct BandBank {
  std::array<filter::Sos, kBands> sos;
  std::array<double, kBands> gain{};

  static constexpr std::size_t kCalibrationLength = 1 << 18;
  // Filter start-up transients of the narrow low bands last well over a
  // second; components are cut from the middle of a longer filtered run.
  static constexpr std::size_t kMargin = 2048;

  explicit BandBank(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0xca11b}));
    for (std::size_t b = 0; b < kBands; ++b) {
      sos[b] = filter::design_butterworth_bandpass(4, kBandEdges[b][0], kBandEdges[b][1], kSampleRate);
      const auto y = filtered(b, rng, kCalibrationLength);
      double ms = 0;
      for (double v : y) ms += v * v;
      ms /= static_cast<double>(y.size());
      gain[b] = 1.0 / std::sqrt(ms);
    }
  }

  std::vector<double> filtered(std::size_t band, Rng& rng, std::size_t n) const {
    const auto y = filter::sosfiltfilt(sos[band], white_noise(rng, n + 2 * kMargin));
    return {y.begin() + kMargin, y.begin() + static_cast<std::ptrdiff_t>(kMargin + n)};
  }

  std::vector<double> component(std::size_t band, Rng& rng, std::size_t n) const {
    auto y = filtered(band, rng, n);
    for (auto& v : y) v *= gain[band];
    return y;
  }

  // Welch power of each calibrated band component on a fresh long signal,
  // relative to the requested unit power.
  std::array<double, kBands> calibration_ratios(std::uint64_t seed) const {
    Rng rng(derive_seed(seed, {0xc4ec4}));
    std::array<double, kBands> ratio{};
    for (std::size_t b = 0; b < kBands; ++b) {
      const auto y = component(b, rng, kCalibrationLength);
      ratio[b] = features::welch_psd(y, kSampleRate).total_power();
    }
    return ratio;
  }
};

// Balanced label codes for one subject: half Buy/Like, half Dislike/Neutral.
inline std::vector<RawLabel> subject_labels(std::uint64_t seed, int subject) {
  Rng rng(derive_seed(seed, {0x1abe1, static_cast<std::uint64_t>(subject)}));
  std::vector<RawLabel> labels;
  for (std::size_t i = 0; i < kAdsPerSubject; ++i) {
    const bool positive = i < kAdsPerSubject / 2;
    const bool first = rng.bernoulli(0.5);
    labels.push_back(positive ? (first ? RawLabel::B : RawLabel::L) : (first ? RawLabel::D : RawLabel::N));
  }
  rng.shuffle(labels);
  return labels;
}

inline std::vector<int> side_channel(Rng& rng, double mean, double sd, std::size_t n, double rate) {
  const auto hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(kSampleRate / rate)));
  std::vector<int> out(n);
  int value = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % hold == 0) value = static_cast<int>(std::clamp(std::lround(rng.normal(mean, sd)), 0L, 100L));
    out[i] = value;
  }
  return out;
}

inline Recording generate_recording(const SynthSpec& spec, const BandBank& bank, const StimulusMeta& meta,
                                    std::uint64_t rec_seed) {
  Rng rng(rec_seed);
  Recording rec;
  rec.meta = meta;
  rec.sample_rate = kSampleRate;
  rec.samples.assign(spec.samples, 0.0);
  const auto profile = spec.profile(meta.reaction());
  for (std::size_t b = 0; b < kBands; ++b) {
    auto c = bank.component(b, rng, spec.samples);
    const double amp = std::sqrt(profile[b]);
    for (std::size_t i = 0; i < spec.samples; ++i) rec.samples[i] += amp * c[i];
  }
  const double floor_amp = std::sqrt(spec.noise_floor);
  for (auto& v : rec.samples) v += floor_amp * rng.normal();
  rec.timestamps.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) rec.timestamps[i] = static_cast<double>(i) / kSampleRate;
  rec.attention = side_channel(rng, spec.attention_mean(meta.reaction()), spec.attention_std, spec.samples,
                               spec.side_channel_rate);
  rec.meditation = side_channel(rng, spec.meditation_mean, spec.attention_std, spec.samples, spec.side_channel_rate);
  return rec;
}

// Throws if any calibrated band's Welch power strays more than 20% from its
// target.
inline void check_calibration(const BandBank& bank, std::uint64_t seed) {
  const auto ratio = bank.calibration_ratios(seed);
  for (std::size_t b = 0; b < kBands; ++b) {
    if (std::abs(ratio[b] - 1.0) > 0.2) {
      throw Error(std::string("synthetic ") + kBandNames[b] + " band calibration off by " +
                  std::to_string((ratio[b] - 1.0) * 100.0) + "%");
    }
  }
}

// Recordings in (subject, product, brand, ad_type) order.
inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const BandBank bank(spec.seed);
  check_calibration(bank, spec.seed);

  Dataset ds;
  ds.metadata["generator"] = "synth";
  ds.metadata["seed"] = std::to_string(spec.seed);
  ds.metadata["n_subjects"] = std::to_string(spec.n_subjects);
  ds.metadata["separability"] = ingest::detail::format_double(spec.separability);
  ds.recordings.reserve(static_cast<std::size_t>(spec.n_subjects) * kAdsPerSubject);

  const int males = spec.males();
  for (int s = 0; s < spec.n_subjects; ++s) {
    const auto labels = subject_labels(spec.seed, s);
    std::size_t slot = 0;
    for (Product p : kProducts) {
      for (int b = 0; b < kBrandsPerProduct; ++b) {
        for (int a = 1; a <= kAdTypes; ++a) {
          StimulusMeta meta{subject_name(s), s < males ? Gender::male : Gender::female, p,
                            "brand" + std::to_string(b + 1), a, labels[slot++]};
          const auto rec_seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(p),
                                                        static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(a)});
          ds.recordings.push_back(generate_recording(spec, bank, meta, rec_seed));
        }
      }
    }
  }
  return ds;
}

}  // namespace nmk::synth
