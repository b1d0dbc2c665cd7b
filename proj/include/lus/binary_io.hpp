#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lus/error.hpp"

// Little-endian primitives shared by the feature-cache and head-parameter
// file formats.
namespace lus::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw Error(ErrorKind::CacheFormat,
                std::string("truncated file while reading ") + what);
  }
  return value;
}

inline std::string get_string(std::istream& in, const char* what,
                              std::uint32_t max_len = 1u << 20) {
  const auto len = get<std::uint32_t>(in, what);
  if (len > max_len) {
    throw Error(ErrorKind::CacheFormat,
                std::string("implausible string length for ") + what);
  }
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) {
    throw Error(ErrorKind::CacheFormat,
                std::string("truncated file while reading ") + what);
  }
  return s;
}

template <typename T>
void get_array(std::istream& in, T* dst, std::size_t count, const char* what) {
  if (count > 0 && !in.read(reinterpret_cast<char*>(dst),
                            static_cast<std::streamsize>(count * sizeof(T)))) {
    throw Error(ErrorKind::CacheFormat,
                std::string("truncated file while reading ") + what);
  }
}

}  // namespace lus::binio
