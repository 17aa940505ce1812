#pragma once

// Domain types shared by every pipeline stage.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nmk {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
// Input for which a statistic is undefined (zero variance, zero fluctuation).
struct DegenerateInputError : Error { using Error::Error; };
// Training data a model cannot be fitted on (e.g. a single class).
struct DegenerateTrainingError : Error { using Error::Error; };
struct StratificationError : Error { using Error::Error; };
struct CorruptBundleError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Constants of the recording protocol
// ---------------------------------------------------------------------------

inline constexpr double kSampleRate = 512.0;
inline constexpr std::size_t kSamplesPerAd = 3584;  // 7 s at 512 Hz
inline constexpr std::size_t kAdsPerSubject = 80;   // 5 products x 4 brands x 4 ads
inline constexpr int kBrandsPerProduct = 4;
inline constexpr int kAdTypes = 4;

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class Gender : std::uint8_t { male = 0, female = 1 };

enum class Product : std::uint8_t {
  Sneakers = 0,
  Headphones = 1,
  LaptopBags = 2,
  Sunglasses = 3,
  Smartphones = 4,
};
inline constexpr std::array<Product, 5> kProducts = {
    Product::Sneakers, Product::Headphones, Product::LaptopBags,
    Product::Sunglasses, Product::Smartphones};

// Raw datasheet code: Buy, Like, Dislike, Neutral.
enum class RawLabel : std::uint8_t { B = 0, L = 1, D = 2, N = 3 };

enum class Reaction : std::uint8_t { Negative = 0, Positive = 1 };

enum class Provenance : std::uint8_t { original = 0, augmented = 1 };

inline std::string_view to_string(Gender g) {
  return g == Gender::male ? "male" : "female";
}

inline std::string_view to_string(Product p) {
  switch (p) {
    case Product::Sneakers: return "Sneakers";
    case Product::Headphones: return "Headphones";
    case Product::LaptopBags: return "LaptopBags";
    case Product::Sunglasses: return "Sunglasses";
    case Product::Smartphones: return "Smartphones";
  }
  return "?";
}

inline std::string_view to_string(Reaction r) {
  return r == Reaction::Positive ? "Positive" : "Negative";
}

inline char to_char(RawLabel l) {
  constexpr char codes[] = {'B', 'L', 'D', 'N'};
  return codes[static_cast<int>(l)];
}

namespace detail {
inline std::string lower_trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}
}  // namespace detail

inline Gender parse_gender(std::string_view s) {
  const auto t = detail::lower_trim(s);
  if (t == "male" || t == "m") return Gender::male;
  if (t == "female" || t == "f") return Gender::female;
  throw FormatError("unknown gender '" + std::string(s) + "'");
}

inline Product parse_product(std::string_view s) {
  const auto t = detail::lower_trim(s);
  for (Product p : kProducts) {
    if (detail::lower_trim(to_string(p)) == t) return p;
  }
  throw FormatError("unknown product '" + std::string(s) + "'");
}

inline RawLabel parse_raw_label(std::string_view code) {
  if (code.size() == 1) {
    switch (code[0]) {
      case 'B': return RawLabel::B;
      case 'L': return RawLabel::L;
      case 'D': return RawLabel::D;
      case 'N': return RawLabel::N;
      default: break;
    }
  }
  throw FormatError("unknown label code '" + std::string(code) + "'");
}

// Buy and Like merge into Positive; Dislike and Neutral into Negative.
inline Reaction to_reaction(RawLabel l) {
  return (l == RawLabel::B || l == RawLabel::L) ? Reaction::Positive
                                                : Reaction::Negative;
}

inline Reaction to_reaction(std::string_view code) {
  return to_reaction(parse_raw_label(code));
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct StimulusMeta {
  std::string subject_id;
  Gender gender = Gender::male;
  Product product = Product::Sneakers;
  std::string brand;
  int ad_type = 1;  // 1..4
  RawLabel raw_label = RawLabel::N;

  Reaction reaction() const { return to_reaction(raw_label); }

  bool operator==(const StimulusMeta&) const = default;
};

// One ad viewing. The side channels are stored per electrode row, as exported
// by the headset (the device updates them at its own slower rate and repeats
// the last value between updates).
struct Recording {
  std::vector<double> samples;
  double sample_rate = kSampleRate;
  std::vector<int> attention;
  std::vector<int> meditation;
  std::vector<double> timestamps;
  StimulusMeta meta;
  Provenance provenance = Provenance::original;
  int copy_index = 0;  // 0 for originals, 1..k for augmented copies

  bool operator==(const Recording&) const = default;
};

// Throws RangeError / FormatError when the per-recording invariants are broken.
inline void check_invariants(const Recording& r) {
  for (int a : r.attention) {
    if (a < 0 || a > 100) throw RangeError("attention value " + std::to_string(a) + " outside 0-100");
  }
  for (int m : r.meditation) {
    if (m < 0 || m > 100) throw RangeError("meditation value " + std::to_string(m) + " outside 0-100");
  }
  for (std::size_t i = 1; i < r.timestamps.size(); ++i) {
    if (!(r.timestamps[i] > r.timestamps[i - 1])) {
      throw FormatError("timestamps not strictly increasing at row " + std::to_string(i + 1));
    }
  }
  if (r.meta.ad_type < 1 || r.meta.ad_type > kAdTypes) {
    throw RangeError("ad_type " + std::to_string(r.meta.ad_type) + " outside 1-4");
  }
}

struct Dataset {
  std::vector<Recording> recordings;
  // Free-form provenance of the whole set (generator parameters etc.).
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return recordings.size(); }
  bool empty() const { return recordings.empty(); }

  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

struct DatasetSummary {
  std::size_t originals = 0;
  std::size_t augmented = 0;
  // The per-key maps below count originals only.
  std::map<std::string, std::size_t> per_subject;
  std::map<std::string, std::size_t> per_gender;
  std::map<std::string, std::size_t> per_product;
  std::map<int, std::size_t> per_ad_type;
  std::map<std::string, std::size_t> per_label;

  std::size_t total() const { return originals + augmented; }
  bool operator==(const DatasetSummary&) const = default;
};

inline DatasetSummary dataset_summary(const Dataset& ds) {
  DatasetSummary s;
  for (const auto& r : ds.recordings) {
    if (r.provenance == Provenance::augmented) {
      ++s.augmented;
      continue;
    }
    ++s.originals;
    ++s.per_subject[r.meta.subject_id];
    ++s.per_gender[std::string(to_string(r.meta.gender))];
    ++s.per_product[std::string(to_string(r.meta.product))];
    ++s.per_ad_type[r.meta.ad_type];
    ++s.per_label[std::string(to_string(r.meta.reaction()))];
  }
  return s;
}

// Distinct genders per subject, in subject order.
inline std::map<std::string, Gender> subject_genders(const Dataset& ds) {
  std::map<std::string, Gender> out;
  for (const auto& r : ds.recordings) out.emplace(r.meta.subject_id, r.meta.gender);
  return out;
}

}  // namespace nmk
