#pragma once

// Little-endian primitives for the "MFA1"/"KRN1" containers.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "misconv/error.hpp"

namespace misconv::detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

inline void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

inline void read_exact(std::istream& in, char* dst, std::size_t count, std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw FormatError("truncated " + std::string(what));
  }
}

inline std::uint32_t read_u32(std::istream& in, std::string_view what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

inline double read_f64(std::istream& in, std::string_view what) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return std::bit_cast<double>(v);
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::array<char, 4> b{};
  in.read(b.data(), b.size());
  if (in.gcount() != 4 || std::string_view(b.data(), 4) != magic) {
    throw FormatError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

}  // namespace misconv::detail
