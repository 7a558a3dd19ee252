#pragma once

#include <zlib.h>

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

#include "debias_cl/error.hpp"

namespace debias_cl {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }

  void doubles(std::span<const double> values) {
    for (double v : values) put(v);
  }

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw TruncatedError(what_ + ": file truncated at byte " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Shared framing: magic, u16 version, payload, u32 CRC32 of the payload.
inline std::vector<std::uint8_t> frame(std::string_view magic, std::uint16_t version, const ByteWriter& payload) {
  ByteWriter w;
  w.raw(magic);
  w.put(version);
  std::vector<std::uint8_t> out = w.bytes();
  out.insert(out.end(), payload.bytes().begin(), payload.bytes().end());
  const std::uint32_t crc = crc32_of(payload.bytes());
  std::uint8_t buf[4];
  std::memcpy(buf, &crc, 4);
  out.insert(out.end(), buf, buf + 4);
  return out;
}

// Validates magic and version and returns the payload span. The checksum is
// verified separately by verify_checksum so header checks can run first.
inline std::span<const std::uint8_t> unframe(std::span<const std::uint8_t> bytes, std::string_view magic,
                                             std::uint16_t version, const std::string& what) {
  ByteReader r(bytes, what);
  if (bytes.size() < magic.size() || r.raw(magic.size()) != magic) throw MagicError(what + ": bad magic");
  const auto v = r.get<std::uint16_t>();
  if (v != version) {
    throw VersionError(what + ": unsupported version " + std::to_string(v) + " (expected " + std::to_string(version) +
                       ")");
  }
  if (r.remaining() < 4) throw TruncatedError(what + ": file truncated before checksum");
  return bytes.subspan(r.position(), r.remaining() - 4);
}

inline void verify_checksum(std::span<const std::uint8_t> bytes, std::span<const std::uint8_t> payload,
                            const std::string& what) {
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(payload) != stored) throw ChecksumError(what + ": checksum mismatch");
}

}  // namespace debias_cl
