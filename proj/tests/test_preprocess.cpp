#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nmk/preprocess.hpp"
#include "support.hpp"

using namespace nmk;

namespace {

double snr_db(const std::vector<double>& clean, const std::vector<double>& noisy) {
  double s = 0, e = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    s += clean[i] * clean[i];
    e += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  }
  return 10 * std::log10(s / e);
}

std::vector<double> scaled_noise(std::uint64_t seed, const std::vector<double>& clean, double snr) {
  auto n = test::noise(seed, clean.size());
  const double k = std::sqrt(test::energy(clean) / test::energy(n) / std::pow(10.0, snr / 10));
  std::vector<double> x(clean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = clean[i] + k * n[i];
  return x;
}

}  // namespace

TEST(RemoveDc, SubtractsMean) {
  const auto y = preprocess::remove_dc(std::vector<double>{1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(y[0], -2.0);
  EXPECT_DOUBLE_EQ(y[3], 3.0);
  double s = 0;
  for (double v : y) s += v;
  EXPECT_NEAR(s, 0.0, 1e-12);
  EXPECT_THROW(preprocess::remove_dc(std::vector<double>{}), ShapeError);
}

TEST(Helpers, MedianAbsAndSoftThreshold) {
  EXPECT_DOUBLE_EQ(preprocess::median_abs({-3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(preprocess::median_abs({-4, 1, 2, -3}), 2.5);
  EXPECT_DOUBLE_EQ(preprocess::soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(preprocess::soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(preprocess::soft_threshold(0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(preprocess::soft_threshold(-1.0, 1.0), 0.0);
}

TEST(Denoise, MatchesReferenceShrinkage) {
  // pywt.wavedec(x, 'db7', mode='periodization', level=6), soft universal
  // threshold from the finest band, pywt.waverec.
  std::vector<double> x(3584);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i);
    x[i] = std::sin(2 * std::numbers::pi * 5 * n / 512) + 0.5 * std::sin(1.7 * std::pow(n, 1.1));
  }
  const auto y = preprocess::denoise(x);
  const std::pair<std::size_t, double> ref[] = {{0, 0.02285825102215535},
                                                {1, 0.05249895315478069},
                                                {100, 0.04632209633130027},
                                                {1791, 0.007208086742507908},
                                                {3583, -0.007026916997754334}};
  for (auto [i, v] : ref) EXPECT_NEAR(y[i], v, 1e-9) << i;
}

TEST(Denoise, ImprovesSnrOfNoisySine) {
  const auto clean = test::sine(5.0, 3584);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = scaled_noise(seed, clean, 5.0);
    EXPECT_NEAR(snr_db(clean, x), 5.0, 1e-9);
    const auto y = preprocess::denoise(x);
    EXPECT_GE(snr_db(clean, y) - 5.0, 3.0) << seed;
  }
}

TEST(Denoise, NeverAddsEnergy) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    auto x = test::noise(seed, 3584, 1.0 + static_cast<double>(seed % 3));
    const auto s = test::sine(static_cast<double>(seed), 3584, kSampleRate, 2.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
    EXPECT_LE(test::energy(preprocess::denoise(x)), test::energy(x) * (1 + 1e-12)) << seed;
  }
}

TEST(Denoise, PreservesLengthAndZero) {
  const auto y = preprocess::denoise(std::vector<double>(3584, 0.0));
  ASSERT_EQ(y.size(), 3584u);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Denoise, ShortSignalRejected) {
  EXPECT_THROW(preprocess::denoise(std::vector<double>(10, 1.0)), ShapeError);
}

TEST(Chain, RemovesOffsetAndMains) {
  auto x = test::sine(50.0, 3584);
  for (auto& v : x) v += 3.0;
  const auto y = preprocess::chain(x);
  ASSERT_EQ(y.size(), x.size());
  EXPECT_LE(test::rms(y, 512, 3584 - 512), 0.05 * test::rms(test::sine(50.0, 3584)));
}

TEST(Chain, KeepsInBandSignal) {
  const auto x = test::sine(10.0, 3584, kSampleRate, 5.0);
  const auto y = preprocess::filter_chain(x);
  EXPECT_NEAR(test::rms(y, 512, 3584 - 512) / test::rms(x, 512, 3584 - 512), 1.0, 0.12);
}

TEST(Chain, PreprocessRecordingKeepsMetaAndSideChannels) {
  const auto rec = test::make_recording(test::noise(4, 3584), 61);
  const auto out = preprocess::preprocess_chain(rec);
  EXPECT_EQ(out.samples.size(), rec.samples.size());
  EXPECT_EQ(out.attention, rec.attention);
  EXPECT_EQ(out.meditation, rec.meditation);
  EXPECT_EQ(out.timestamps, rec.timestamps);
  EXPECT_EQ(out.meta, rec.meta);
  EXPECT_NE(out.samples, rec.samples);
}

TEST(Chain, SampleRateMismatchRejected) {
  auto rec = test::make_recording(test::noise(4, 3584));
  rec.sample_rate = 256.0;
  EXPECT_THROW(preprocess::preprocess_chain(rec), ParameterError);
}

TEST(Chain, WrongSpecKindRejected) {
  const auto x = test::noise(5, 1024);
  EXPECT_THROW(preprocess::bandpass(x, filter::FilterSpec::notch(50.0)), ParameterError);
  EXPECT_THROW(preprocess::notch(x, filter::FilterSpec::bandpass(0.5, 50.0)), ParameterError);
}

TEST(Chain, Deterministic) {
  const auto x = test::noise(6, 3584);
  EXPECT_EQ(preprocess::chain(x), preprocess::chain(x));
}
