#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ptlab {

// Byte-level vocabulary: 3 special tokens, then one id per byte value.
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kBosId = 1;
inline constexpr int32_t kEosId = 2;
inline constexpr int32_t kByteOffset = 3;
inline constexpr int64_t kByteVocabSize = 256 + kByteOffset;  // 259

struct TokenSeq {
  std::vector<int32_t> ids;
  std::string text;  // original bytes when known, else empty

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq& o) const { return ids == o.ids; }
};

// One id per UTF-8 byte; detokenize(tokenize(s)) == s for any byte string.
TokenSeq tokenize(std::string_view text);

// Special tokens produce no output bytes.
std::string detokenize(const std::vector<int32_t>& ids);
inline std::string detokenize(const TokenSeq& seq) { return detokenize(seq.ids); }

}  // namespace ptlab
