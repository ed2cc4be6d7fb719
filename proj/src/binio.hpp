#pragma once

// Little-endian scalar encoding for the binary formats, independent of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "backdrop/format_error.hpp"

namespace backdrop::binio {

template <typename U>
void put_uint(std::ostream& os, U v) {
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, sizeof(U));
}

template <typename U>
U get_uint(std::istream& is, const std::string& what) {
  unsigned char b[sizeof(U)];
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) {
    throw FormatError(what + ": unexpected end of file at byte " + std::to_string(offset));
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
  return v;
}

inline void put_f32(std::ostream& os, float v) { put_uint<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_uint<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v)); }
inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(is, what));
}
inline double get_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(is, what));
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what, std::size_t max_len = 1 << 20) {
  const auto n = get_uint<std::uint32_t>(is, what);
  if (n > max_len) throw FormatError(what + ": string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw FormatError(what + ": unexpected end of file in string");
  return s;
}

}  // namespace backdrop::binio
