#pragma once

// Recording/label file parsing, manifest-driven dataset assembly, and the
// binary dataset bundle.
//
// Recording file: comma separated, header row naming Time, Electrode,
// Attention and Meditation in any order (case-insensitive, whitespace
// stripped). Label file: one code per line or comma separated, 80 entries.
// Manifest: JSON
//
//   {
//     "labels":  { "<subject_id>": "<labels path>", ... },
//     "entries": [ { "recording_path": "...", "subject_id": "...",
//                    "gender": "male|female", "product": "Sneakers|...",
//                    "brand": "...", "ad_type": 1 }, ... ]
//   }
//
// Relative paths resolve against the manifest's directory. Labels are
// aligned to a subject's entries in manifest order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "nmk/binio.hpp"
#include "nmk/core.hpp"

namespace nmk::ingest {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Locale-independent; accepts an optional leading '+'.
inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses one per-ad recording file. Meta is left default.
inline Recording parse_recording(std::string_view text) {
  auto rows = detail::lines(text);
  std::size_t first = 0;
  while (first < rows.size() && detail::trim(rows[first]).empty()) ++first;
  if (first == rows.size()) throw FormatError("missing header row");

  enum Col { kTime, kElectrode, kAttention, kMeditation };
  constexpr std::string_view names[] = {"time", "electrode", "attention", "meditation"};
  int index[4] = {-1, -1, -1, -1};
  auto header = detail::split(rows[first], ',');
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto key = nmk::detail::lower_trim(header[c]);
    for (int k = 0; k < 4; ++k) {
      if (key == names[k]) {
        if (index[k] >= 0) throw FormatError("duplicate column '" + key + "'");
        index[k] = static_cast<int>(c);
      }
    }
  }
  for (int k = 0; k < 4; ++k) {
    if (index[k] < 0) throw FormatError("missing column '" + std::string(names[k]) + "'");
  }
  const auto width = static_cast<std::size_t>(*std::max_element(std::begin(index), std::end(index))) + 1;

  Recording rec;
  for (std::size_t r = first + 1; r < rows.size(); ++r) {
    const auto row_no = std::to_string(r + 1);
    if (detail::trim(rows[r]).empty()) continue;
    auto cells = detail::split(rows[r], ',');
    if (cells.size() < width) throw FormatError("row " + row_no + ": expected at least " + std::to_string(width) + " cells");
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!detail::parse_double(cells[static_cast<std::size_t>(index[k])], v[k])) {
        throw FormatError("row " + row_no + ": non-numeric " + std::string(names[k]) + " cell '" +
                          std::string(detail::trim(cells[static_cast<std::size_t>(index[k])])) + "'");
      }
    }
    for (int k : {kAttention, kMeditation}) {
      if (v[k] != std::floor(v[k])) throw FormatError("row " + row_no + ": non-integer " + std::string(names[k]));
      if (v[k] < 0 || v[k] > 100) {
        throw RangeError("row " + row_no + ": " + std::string(names[k]) + " " + detail::format_double(v[k]) +
                         " outside 0-100");
      }
    }
    if (!rec.timestamps.empty() && !(v[kTime] > rec.timestamps.back())) {
      throw FormatError("row " + row_no + ": timestamps not strictly increasing");
    }
    rec.timestamps.push_back(v[kTime]);
    rec.samples.push_back(v[kElectrode]);
    rec.attention.push_back(static_cast<int>(v[kAttention]));
    rec.meditation.push_back(static_cast<int>(v[kMeditation]));
  }
  return rec;
}

// Canonical file form: fixed column order, shortest round-trip decimals.
inline std::string serialize_recording(const Recording& rec) {
  const auto n = rec.samples.size();
  if (rec.timestamps.size() != n || rec.attention.size() != n || rec.meditation.size() != n) {
    throw ShapeError("recording columns have unequal lengths");
  }
  std::string out = "Time,Electrode,Attention,Meditation\n";
  out.reserve(n * 40);
  for (std::size_t i = 0; i < n; ++i) {
    out += detail::format_double(rec.timestamps[i]);
    out += ',';
    out += detail::format_double(rec.samples[i]);
    out += ',';
    out += std::to_string(rec.attention[i]);
    out += ',';
    out += std::to_string(rec.meditation[i]);
    out += '\n';
  }
  return out;
}

inline std::string normalize_recording_text(std::string_view text) {
  return serialize_recording(parse_recording(text));
}

// Labels in ad order; exactly `expected` codes.
inline std::vector<RawLabel> parse_labels(std::string_view text, std::string_view subject_id,
                                          std::size_t expected = kAdsPerSubject) {
  std::vector<RawLabel> out;
  auto rows = detail::lines(text);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (auto cell : detail::split(rows[r], ',')) {
      cell = detail::trim(cell);
      if (cell.empty()) continue;
      try {
        out.push_back(parse_raw_label(cell));
      } catch (const FormatError& e) {
        throw FormatError("labels for subject " + std::string(subject_id) + ", line " + std::to_string(r + 1) +
                          ": " + e.what());
      }
    }
  }
  if (out.size() != expected) {
    throw ShapeError("labels for subject " + std::string(subject_id) + ": expected " + std::to_string(expected) +
                     " codes, found " + std::to_string(out.size()));
  }
  return out;
}

inline std::string serialize_labels(const std::vector<RawLabel>& labels) {
  std::string out;
  for (auto l : labels) {
    out += to_char(l);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::filesystem::path recording_path;
  std::string subject_id;
  Gender gender = Gender::male;
  Product product = Product::Sneakers;
  std::string brand;
  int ad_type = 1;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::map<std::string, std::filesystem::path> labels_path;
};

inline Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  Manifest m;
  try {
    for (auto& [subject, path] : j.at("labels").items()) m.labels_path[subject] = resolve(path.get<std::string>());
    std::set<std::tuple<std::string, Product, std::string, int>> seen;
    std::size_t i = 0;
    for (const auto& e : j.at("entries")) {
      ++i;
      ManifestEntry me;
      me.recording_path = resolve(e.at("recording_path").get<std::string>());
      me.subject_id = e.at("subject_id").get<std::string>();
      me.gender = parse_gender(e.at("gender").get<std::string>());
      me.product = parse_product(e.at("product").get<std::string>());
      me.brand = e.at("brand").get<std::string>();
      me.ad_type = e.at("ad_type").get<int>();
      if (me.ad_type < 1 || me.ad_type > kAdTypes) {
        throw RangeError("manifest entry " + std::to_string(i) + ": ad_type outside 1-4");
      }
      if (!seen.emplace(me.subject_id, me.product, me.brand, me.ad_type).second) {
        throw FormatError("manifest entry " + std::to_string(i) + ": duplicate (subject, product, brand, ad_type)");
      }
      if (!m.labels_path.count(me.subject_id)) {
        throw FormatError("manifest entry " + std::to_string(i) + ": no labels file for subject " + me.subject_id);
      }
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(binio::read_file(path), path.parent_path());
}

namespace detail {
// Re-throws nmk errors with the offending file path prefixed, keeping the type.
template <class F>
auto with_path(const std::filesystem::path& path, F&& f) {
  const std::string where = path.string() + ": ";
  try {
    return f();
  } catch (const FormatError& e) {
    throw FormatError(where + e.what());
  } catch (const RangeError& e) {
    throw RangeError(where + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  }
}

inline std::string read_existing(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(path.string() + ": file not found");
  return binio::read_file(path);
}
}  // namespace detail

inline bool recording_order(const Recording& a, const Recording& b) {
  return std::tie(a.meta.subject_id, a.meta.product, a.meta.brand, a.meta.ad_type, a.provenance, a.copy_index) <
         std::tie(b.meta.subject_id, b.meta.product, b.meta.brand, b.meta.ad_type, b.provenance, b.copy_index);
}

inline Dataset load_dataset(const Manifest& manifest) {
  std::map<std::string, std::vector<RawLabel>> labels;
  for (const auto& [subject, path] : manifest.labels_path) {
    auto text = detail::read_existing(path);
    labels[subject] = detail::with_path(path, [&] { return parse_labels(text, subject); });
  }
  std::map<std::string, std::size_t> slot;
  Dataset ds;
  ds.recordings.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto text = detail::read_existing(e.recording_path);
    Recording rec = detail::with_path(e.recording_path, [&] { return parse_recording(text); });
    auto& i = slot[e.subject_id];
    const auto& subject_labels = labels.at(e.subject_id);
    if (i >= subject_labels.size()) {
      throw ShapeError("subject " + e.subject_id + " has more recordings than labels");
    }
    rec.meta = StimulusMeta{e.subject_id, e.gender, e.product, e.brand, e.ad_type, subject_labels[i++]};
    ds.recordings.push_back(std::move(rec));
  }
  std::stable_sort(ds.recordings.begin(), ds.recordings.end(), recording_order);
  return ds;
}

// Rejects recordings the feature stage cannot use.
inline void validate_for_features(const Recording& rec, std::size_t min_samples = kSamplesPerAd) {
  if (rec.sample_rate != kSampleRate) {
    throw ShapeError("sample rate " + detail::format_double(rec.sample_rate) + " Hz, expected 512 Hz");
  }
  if (rec.samples.size() < min_samples) {
    throw ShapeError("recording of subject " + rec.meta.subject_id + " has " + std::to_string(rec.samples.size()) +
                     " samples, expected at least " + std::to_string(min_samples));
  }
}

// ---------------------------------------------------------------------------
// Bundle
//
//   "NMK1" u8(kind=1)
//   u64 n_metadata { str key, str value }
//   u64 n_recordings
//   per recording:
//     str subject_id, u8 gender, u8 product, str brand, u8 ad_type, u8 raw_label,
//     u8 provenance, u64 copy_index, f64 sample_rate,
//     f64s samples, f64s timestamps, u64 n + u8[n] attention, u64 n + u8[n] meditation
//
// Integers and floats are little-endian.
// ---------------------------------------------------------------------------

inline std::string encode_dataset(const Dataset& ds) {
  binio::Writer w;
  w.header(binio::PayloadKind::dataset);
  w.u64(ds.metadata.size());
  for (const auto& [k, v] : ds.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u64(ds.recordings.size());
  for (const auto& r : ds.recordings) {
    w.str(r.meta.subject_id);
    w.u8(static_cast<std::uint8_t>(r.meta.gender));
    w.u8(static_cast<std::uint8_t>(r.meta.product));
    w.str(r.meta.brand);
    w.u8(static_cast<std::uint8_t>(r.meta.ad_type));
    w.u8(static_cast<std::uint8_t>(r.meta.raw_label));
    w.u8(static_cast<std::uint8_t>(r.provenance));
    w.u64(static_cast<std::uint64_t>(r.copy_index));
    w.f64(r.sample_rate);
    w.f64s(r.samples);
    w.f64s(r.timestamps);
    for (const auto* side : {&r.attention, &r.meditation}) {
      w.u64(side->size());
      for (int a : *side) w.u8(static_cast<std::uint8_t>(a));
    }
  }
  return w.bytes();
}

inline Dataset decode_dataset(std::string_view bytes) {
  binio::Reader rd(bytes);
  rd.header(binio::PayloadKind::dataset);
  Dataset ds;
  auto nmeta = rd.count(16);
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    auto k = rd.str();
    ds.metadata[k] = rd.str();
  }
  auto n = rd.count(1);
  ds.recordings.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Recording r;
    r.meta.subject_id = rd.str();
    auto g = rd.u8();
    auto p = rd.u8();
    r.meta.brand = rd.str();
    auto ad = rd.u8();
    auto lab = rd.u8();
    auto prov = rd.u8();
    if (g > 1 || p > 4 || ad < 1 || ad > 4 || lab > 3 || prov > 1) {
      throw CorruptBundleError("bundle recording " + std::to_string(i) + ": enum field out of range");
    }
    r.meta.gender = static_cast<Gender>(g);
    r.meta.product = static_cast<Product>(p);
    r.meta.ad_type = ad;
    r.meta.raw_label = static_cast<RawLabel>(lab);
    r.provenance = static_cast<Provenance>(prov);
    r.copy_index = static_cast<int>(rd.u64());
    r.sample_rate = rd.f64();
    r.samples = rd.f64s();
    r.timestamps = rd.f64s();
    for (auto* side : {&r.attention, &r.meditation}) {
      auto m = rd.count(1);
      side->resize(m);
      for (auto& a : *side) a = rd.u8();
    }
    ds.recordings.push_back(std::move(r));
  }
  rd.expect_end();
  return ds;
}

inline void save_bundle(const Dataset& ds, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_dataset(ds));
}

inline Dataset load_bundle(const std::filesystem::path& path) {
  return decode_dataset(binio::read_file(path));
}

}  // namespace nmk::ingest
