#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "lyricemb/common.hpp"

namespace lyricemb {

// Little-endian primitive writer used by every binary artifact
// (embedding files, probe files, tagger models).
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    const U bits = std::bit_cast<U>(value);
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out_.write(bytes.data(), bytes.size());
  }

  void bytes(std::string_view data) { out_.write(data.data(), static_cast<std::streamsize>(data.size())); }

  void magic(std::string_view tag) { bytes(tag.substr(0, 4)); }

  // u16 length prefix
  void short_string(std::string_view s) {
    if (s.size() > 0xFFFF) throw Error("string too long for u16 length: " + std::string(s.substr(0, 32)));
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }

  bool good() const { return out_.good(); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    std::array<unsigned char, sizeof(T)> raw{};
    read_exact(reinterpret_cast<char*>(raw.data()), raw.size());
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(raw[i]) << (8 * i));
    }
    return std::bit_cast<T>(bits);
  }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read_exact(s.data(), n);
    return s;
  }

  void expect_magic(std::string_view tag) {
    const auto start = offset_;
    const std::string got = bytes(tag.size());
    if (got != tag) {
      throw FormatError("bad magic: expected '" + std::string(tag) + "'", start);
    }
  }

  std::string short_string() { return bytes(get<std::uint16_t>()); }

  std::uint64_t offset() const { return offset_; }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  void read_exact(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw FormatError("truncated payload: wanted " + std::to_string(n) +
                            " bytes, got " + std::to_string(got),
                        offset_ + got);
    }
    offset_ += n;
  }

  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace lyricemb
