#include <gtest/gtest.h>

#include <cmath>

#include "nmk/augment.hpp"
#include "support.hpp"

using namespace nmk;

namespace {

std::vector<Recording> originals(std::size_t n) {
  std::vector<Recording> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = test::make_recording(test::noise(100 + i, 3584, 2.0 + static_cast<double>(i)));
    r.meta.brand = "brand" + std::to_string(i % 4 + 1);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Augment, OriginalsFollowedByCopies) {
  const auto in = originals(3);
  const auto out = augment::augment(in, 11);
  ASSERT_EQ(out.size(), 18u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(out[6 * j], in[j]);
    for (int i = 1; i <= 5; ++i) {
      const auto& c = out[6 * j + static_cast<std::size_t>(i)];
      EXPECT_EQ(c.provenance, Provenance::augmented);
      EXPECT_EQ(c.copy_index, i);
      EXPECT_EQ(c.meta, in[j].meta);
      EXPECT_EQ(c.attention, in[j].attention);
      EXPECT_EQ(c.timestamps, in[j].timestamps);
      EXPECT_NE(c.samples, in[j].samples);
    }
  }
}

TEST(Augment, NoiseStdIsFractionOfSignalStd) {
  const auto in = originals(2);
  const auto out = augment::augment(in, 3);
  const auto& f = augment::default_fractions();
  for (std::size_t j = 0; j < in.size(); ++j) {
    const double sd = augment::stddev(in[j].samples);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto& c = out[6 * j + i + 1];
      std::vector<double> d(c.samples.size());
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = c.samples[k] - in[j].samples[k];
      // 3584 draws: the sample std is within 5% with overwhelming probability.
      EXPECT_NEAR(augment::stddev(d) / (f[i] * sd), 1.0, 0.05);
      double mean = 0;
      for (double v : d) mean += v;
      EXPECT_NEAR(mean / static_cast<double>(d.size()), 0.0, 4 * f[i] * sd / std::sqrt(3584.0));
    }
  }
}

TEST(Augment, DeterministicAndSeedSensitive) {
  const auto in = originals(2);
  EXPECT_EQ(augment::augment(in, 5), augment::augment(in, 5));
  EXPECT_NE(augment::augment(in, 5)[1].samples, augment::augment(in, 6)[1].samples);
}

TEST(Augment, CopiesOfOneOriginalIndependentOfOthers) {
  const auto in = originals(3);
  const std::vector<Recording> prefix(in.begin(), in.begin() + 2);
  const auto full = augment::augment(in, 8);
  const auto part = augment::augment(prefix, 8);
  for (std::size_t i = 0; i < part.size(); ++i) EXPECT_EQ(part[i], full[i]);
}

TEST(Augment, CustomCopies) {
  const auto in = originals(2);
  const std::vector<double> f = {0.5, 1.0};
  const auto out = augment::augment(in, 2, f, 1);
  EXPECT_EQ(out.size(), 6u);
  EXPECT_TRUE(augment::augment(in, 0, std::vector<double>{}, 1) == in);
}

TEST(Augment, InvalidArguments) {
  const auto in = originals(1);
  EXPECT_THROW(augment::augment(in, 2, std::vector<double>{0.1}, 1), ParameterError);
  EXPECT_THROW(augment::augment(in, 1, std::vector<double>{0.0}, 1), ParameterError);
  EXPECT_THROW(augment::augment(in, -1, std::vector<double>{}, 1), ParameterError);
  auto flat = test::make_recording(std::vector<double>(100, 3.0));
  EXPECT_THROW(augment::augment(std::vector<Recording>{flat}, 1), DegenerateInputError);
}
