#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ptlab {

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

// FNV-1a over a file's bytes, rendered as 16 hex chars. Throws Error(io)
// if the file cannot be read.
std::string digest_file(const std::string& path);

}  // namespace ptlab
