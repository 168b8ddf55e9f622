#pragma once

// Little-endian primitives shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "physgnn/error.hpp"

namespace physgnn::io {

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw InputError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_u32(std::ostream& o, std::uint32_t v) { put_le(o, v); }
inline void put_u64(std::ostream& o, std::uint64_t v) { put_le(o, v); }
inline void put_i32(std::ostream& o, std::int32_t v) { put_le(o, static_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& o, double v) { put_le(o, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& i) { return get_le<std::uint32_t>(i); }
inline std::uint64_t get_u64(std::istream& i) { return get_le<std::uint64_t>(i); }
inline std::int32_t get_i32(std::istream& i) { return static_cast<std::int32_t>(get_le<std::uint32_t>(i)); }
inline double get_f64(std::istream& i) { return std::bit_cast<double>(get_le<std::uint64_t>(i)); }

inline void put_f64s(std::ostream& o, const std::vector<double>& v) {
  for (double x : v) put_f64(o, x);
}

inline std::vector<double> get_f64s(std::istream& i, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = get_f64(i);
  return v;
}

inline void put_string(std::ostream& o, const std::string& s) {
  put_u64(o, s.size());
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& i, std::size_t limit = 1u << 30) {
  const auto n = get_u64(i);
  if (n > limit) throw InputError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (!i.read(s.data(), static_cast<std::streamsize>(n))) throw InputError("unexpected end of file");
  return s;
}

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace physgnn::io
