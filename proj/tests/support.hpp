#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "nmk/core.hpp"
#include "nmk/rng.hpp"

namespace nmk::test {

inline std::vector<double> sine(double freq, std::size_t n, double fs = kSampleRate, double amp = 1.0,
                                double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / fs + phase);
  }
  return x;
}

inline std::vector<double> noise(std::uint64_t seed, std::size_t n, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal(0.0, sd);
  return x;
}

inline double energy(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s;
}

inline double rms(const std::vector<double>& x, std::size_t from = 0, std::size_t to = 0) {
  if (to == 0) to = x.size();
  double s = 0;
  for (std::size_t i = from; i < to; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(to - from));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Recording with the given samples, constant side channels and 1/fs timestamps.
inline Recording make_recording(std::vector<double> samples, int attention = 50) {
  Recording r;
  const auto n = samples.size();
  r.samples = std::move(samples);
  r.attention.assign(n, attention);
  r.meditation.assign(n, 40);
  r.timestamps.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.timestamps[i] = static_cast<double>(i) / kSampleRate;
  r.meta = StimulusMeta{"S01", Gender::female, Product::Headphones, "brand2", 3, RawLabel::L};
  return r;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("nmk_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace nmk::test
