#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <zlib.h>

#include "neucall/error.hpp"

namespace neucall {

// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void tag(std::string_view magic) { bytes(magic.data(), magic.size()); }
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    bytes(raw, sizeof(T));
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <class T>
  void array(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }
  // Appends a crc32 of everything written so far.
  void seal() { put<std::uint32_t>(crc32_of(buf_.data(), buf_.size())); }

  const std::vector<std::uint8_t>& data() const { return buf_; }

  void write_file(const std::filesystem::path& path) const;

  static std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
      const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
      crc = ::crc32(crc, p, chunk);
      p += chunk;
      n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void ByteWriter::write_file(const std::filesystem::path& path) const { write_bytes(path, buf_); }

// Bounds-checked reader; `Corrupt` is thrown (with a message) on any overrun.
template <class Corrupt>
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  static ByteReader from_file(const std::filesystem::path& path) { return ByteReader(read_bytes(path)); }

  bool has_magic(std::string_view magic) const {
    return buf_.size() >= magic.size() && std::memcmp(buf_.data(), magic.data(), magic.size()) == 0;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <class T>
  std::vector<T> array() {
    const auto n = get<std::uint64_t>();
    if (n > remaining() / sizeof(T)) throw Corrupt("array length exceeds file size");
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  // Verifies the trailing crc32 covering every preceding byte.
  void verify_seal() const {
    if (buf_.size() < 4) throw Corrupt("file too short");
    std::uint32_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
    if (stored != ByteWriter::crc32_of(buf_.data(), buf_.size() - 4)) throw Corrupt("checksum mismatch");
  }
  // Ensures the body ends exactly where the trailing checksum starts.
  void expect_seal_next() const {
    if (pos_ + 4 != buf_.size()) throw Corrupt("unexpected trailing data");
  }
  std::size_t size() const { return buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) throw Corrupt("unexpected end of file");
  }
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace neucall
