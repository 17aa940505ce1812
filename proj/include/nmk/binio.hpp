#pragma once

// Little-endian binary primitives shared by all bundle payloads, and
// write-then-rename file output.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nmk/core.hpp"

namespace nmk::binio {

inline constexpr char kMagic[4] = {'N', 'M', 'K', '1'};

enum class PayloadKind : std::uint8_t { dataset = 1, model = 2, net = 3 };

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s.data(), s.size());
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void raw(std::string_view s) { buf_.append(s.data(), s.size()); }

  void header(PayloadKind kind) {
    raw(std::string_view(kMagic, 4));
    u8(static_cast<std::uint8_t>(kind));
  }

  const std::string& bytes() const { return buf_; }

 private:
  template <class U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string str() {
    auto n = count(1);
    auto s = take(n);
    return std::string(s);
  }
  std::vector<double> f64s() {
    auto n = count(8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  // Length prefix checked against the bytes left, so a corrupt count cannot
  // trigger a huge allocation.
  std::uint64_t count(std::size_t elem_size) {
    auto n = u64();
    if (elem_size > 0 && n > remaining() / elem_size) {
      throw CorruptBundleError("bundle truncated: count " + std::to_string(n) + " exceeds remaining bytes");
    }
    return n;
  }

  void header(PayloadKind expected) {
    auto m = take(4);
    if (std::memcmp(m.data(), kMagic, 4) != 0) throw CorruptBundleError("bad bundle magic");
    auto k = u8();
    if (k != static_cast<std::uint8_t>(expected)) {
      throw CorruptBundleError("bundle holds payload kind " + std::to_string(k) + ", expected " +
                               std::to_string(static_cast<int>(expected)));
    }
  }

  void expect_end() const {
    if (pos_ != data_.size()) throw CorruptBundleError("trailing bytes after bundle payload");
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw CorruptBundleError("bundle truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U get_le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Writes to a sibling temporary and renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace nmk::binio
