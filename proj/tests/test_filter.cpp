#include <gtest/gtest.h>

#include <cmath>
#include <array>
#include <complex>
#include <numbers>

#include "nmk/filter.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nmk;
using namespace nmk::test::oracle;

namespace {

constexpr double kFs = 512.0;

double db(double ratio) { return 20 * std::log10(ratio); }

// Amplitude of the steady-state output, measured away from the edges.
double steady_amplitude(const std::vector<double>& y) {
  const std::size_t q = y.size() / 4;
  return test::rms(y, q, y.size() - q) * std::sqrt(2.0);
}

}  // namespace

// Expanded numerator and denominator of a cascade, in powers of z^-1.
static std::pair<std::vector<double>, std::vector<double>> expand(const std::vector<std::array<double, 5>>& sections) {
  std::vector<double> b{1.0}, a{1.0};
  auto mul = [](const std::vector<double>& p, std::array<double, 3> q) {
    std::vector<double> r(p.size() + 2, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < 3; ++j) r[i + j] += p[i] * q[j];
    return r;
  };
  for (const auto& s : sections) {
    b = mul(b, {s[0], s[1], s[2]});
    a = mul(a, {1.0, s[3], s[4]});
  }
  return {b, a};
}

TEST(Design, ButterworthMatchesReferenceTransferFunction) {
  // scipy.signal.butter(4, [0.5, 50], 'bandpass', fs=512, output='sos'); the
  // sections pair zeros differently, so compare the expanded polynomials.
  const std::vector<std::array<double, 5>> ref = {
      {0.00429946931196562, 0.00859893862393124, 0.00429946931196562, -1.0807065133479474, 0.3130501793904506},
      {1, 2, 1, -1.3459630250815784, 0.6444365465830921},
      {1, -2, 1, -1.9885326270938493, 0.9885713336895187},
      {1, -2, 1, -1.9953416437269076, 0.995379413436814}};
  const auto sos = filter::design(filter::FilterSpec::bandpass(0.5, 50.0));
  ASSERT_EQ(sos.size(), 4u);
  std::vector<std::array<double, 5>> got;
  for (const auto& s : sos) got.push_back({s.b0, s.b1, s.b2, s.a1, s.a2});
  const auto [rb, ra] = expand(ref);
  const auto [gb, ga] = expand(got);
  ASSERT_EQ(gb.size(), rb.size());
  for (std::size_t i = 0; i < rb.size(); ++i) {
    EXPECT_NEAR(gb[i], rb[i], 1e-12) << i;
    EXPECT_NEAR(ga[i], ra[i], 1e-10) << i;
  }
}

TEST(Design, NotchMatchesReferenceCoefficients) {
  // scipy.signal.iirnotch(50, 30, 512)
  const auto s = filter::design(filter::FilterSpec::notch(50.0, 30.0)).front();
  EXPECT_NEAR(s.b0, 0.9898766354819536, 1e-14);
  EXPECT_NEAR(s.b1, -1.6186162081272628, 1e-14);
  EXPECT_NEAR(s.b2, 0.9898766354819536, 1e-14);
  EXPECT_NEAR(s.a1, -1.6186162081272628, 1e-14);
  EXPECT_NEAR(s.a2, 0.9797532709639072, 1e-14);
}

TEST(Design, ResponseMatchesAnalyticMagnitude) {
  const auto bp = filter::design(filter::FilterSpec::bandpass(0.5, 50.0));
  const auto nt = filter::design(filter::FilterSpec::notch(50.0, 30.0));
  for (double f : {0.05, 0.2, 0.5, 1.0, 5.0, 10.0, 30.0, 50.0, 70.0, 120.0, 200.0}) {
    EXPECT_NEAR(std::abs(filter::response(bp, f, kFs)), butterworth_bandpass_magnitude(f, 0.5, 50.0, 4), 1e-9) << f;
    EXPECT_NEAR(std::abs(filter::response(nt, f, kFs)), notch_magnitude(f, 50.0, 30.0), 1e-12) << f;
  }
  EXPECT_NEAR(std::abs(filter::response(bp, 0.5, kFs)), std::sqrt(0.5), 1e-9);
  EXPECT_NEAR(std::abs(filter::response(bp, 50.0, kFs)), std::sqrt(0.5), 1e-9);
}

TEST(Design, InvalidSpecsAreParameterErrors) {
  EXPECT_THROW(filter::design(filter::FilterSpec::bandpass(0.5, 256.0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::bandpass(0.5, 300.0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::bandpass(10.0, 5.0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::bandpass(0.0, 50.0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::bandpass(0.5, 50.0, 0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::notch(256.0)), ParameterError);
  EXPECT_THROW(filter::design(filter::FilterSpec::notch(50.0, 0.0)), ParameterError);
}

TEST(Sosfiltfilt, MatchesReferenceOnShortSignal) {
  std::vector<double> x(64);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.9 * static_cast<double>(i)) + 0.05 * static_cast<double>(i);
  // scipy.signal.sosfiltfilt with default odd padding
  const auto bp = filter::sosfiltfilt(filter::design(filter::FilterSpec::bandpass(0.5, 50.0)), x);
  const std::pair<std::size_t, double> ref_bp[] = {
      {0, -0.9605656197621811}, {1, -0.9163109119860263}, {31, -0.484427264862091}, {62, -0.2810304448919232},
      {63, -0.17985642450591566}};
  for (auto [i, v] : ref_bp) EXPECT_NEAR(bp[i], v, 1e-9) << i;
  const auto nt = filter::sosfiltfilt(filter::design(filter::FilterSpec::notch(50.0)), x);
  const std::pair<std::size_t, double> ref_nt[] = {
      {0, 0.03793438423119819}, {1, 0.8308842481482701}, {31, 1.9408385124113472}, {62, 2.4314515628996807},
      {63, 3.2566250323522943}};
  for (auto [i, v] : ref_nt) EXPECT_NEAR(nt[i], v, 1e-9) << i;
}

TEST(Sosfiltfilt, TenHertzPassesWithinOneDecibel) {
  const auto sos = filter::design(filter::FilterSpec::bandpass(0.5, 50.0));
  const auto y = filter::sosfiltfilt(sos, test::sine(10.0, 3584));
  const double expected = std::pow(butterworth_bandpass_magnitude(10.0, 0.5, 50.0, 4), 2);
  EXPECT_LE(std::abs(db(steady_amplitude(y))), 1.0);
  EXPECT_NEAR(steady_amplitude(y), expected, 0.01);
}

TEST(Sosfiltfilt, OutOfBandSinesAttenuatedTwentyDecibels) {
  const auto sos = filter::design(filter::FilterSpec::bandpass(0.5, 50.0));
  // 0.05 Hz needs several periods: 100 s.
  for (auto [f, n] : {std::pair{0.05, std::size_t{51200}}, std::pair{120.0, std::size_t{3584}}}) {
    const auto y = filter::sosfiltfilt(sos, test::sine(f, n));
    const double oracle = std::pow(butterworth_bandpass_magnitude(f, 0.5, 50.0, 4), 2);
    EXPECT_LE(db(oracle), -20.0) << f;
    EXPECT_LE(db(steady_amplitude(y)), -20.0) << f;
  }
}

TEST(Sosfiltfilt, NotchRemovesFiftyHertz) {
  const auto sos = filter::design(filter::FilterSpec::notch(50.0, 30.0));
  const auto y = filter::sosfiltfilt(sos, test::sine(50.0, 3584));
  EXPECT_LE(steady_amplitude(y), 0.03);
  EXPECT_LE(db(std::pow(notch_magnitude(50.0, 50.0, 30.0), 2) + 1e-300), -30.0);
  const auto ten = filter::sosfiltfilt(sos, test::sine(10.0, 3584));
  EXPECT_LE(std::abs(db(steady_amplitude(ten))), 1.0);
}

TEST(Sosfiltfilt, NotchRippleUnderOneDecibelFiveHertzAway) {
  for (double f : {45.0, 55.0}) EXPECT_GT(db(notch_magnitude(f, 50.0, 30.0)), -1.0) << f;
}

TEST(Sosfiltfilt, ZeroInZeroOut) {
  for (const auto& spec : {filter::FilterSpec::bandpass(0.5, 50.0), filter::FilterSpec::notch(50.0)}) {
    const auto y = filter::sosfiltfilt(filter::design(spec), std::vector<double>(500, 0.0));
    for (double v : y) EXPECT_EQ(v, 0.0);
  }
  EXPECT_TRUE(filter::sosfiltfilt(filter::design(filter::FilterSpec::notch(50.0)), {}).empty());
}

TEST(Sosfiltfilt, ZeroPhaseCrossCorrelationPeaksAtLagZero) {
  const auto x = test::sine(12.0, 3584);
  const auto y = filter::sosfiltfilt(filter::design(filter::FilterSpec::bandpass(0.5, 50.0)), x);
  int best_lag = 100;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double s = 0;
    for (std::size_t i = 500; i + 500 < x.size(); ++i) s += x[i] * y[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (s > best) {
      best = s;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

TEST(Sosfilt, StepInitialStateGivesSteadyStepResponse) {
  const auto sos = filter::design(filter::FilterSpec::notch(50.0));
  auto state = filter::step_initial_state(sos);
  const auto y = filter::sosfilt(sos, std::vector<double>(20, 1.0), state);
  for (double v : y) EXPECT_NEAR(v, 1.0, 1e-12);
}
