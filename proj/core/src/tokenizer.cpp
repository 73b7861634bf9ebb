#include "ptlab/tokenizer.hpp"

namespace ptlab {

TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  seq.ids.reserve(text.size());
  for (unsigned char c : text) seq.ids.push_back(static_cast<int32_t>(c) + kByteOffset);
  seq.text.assign(text);
  return seq;
}

std::string detokenize(const std::vector<int32_t>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int32_t id : ids)
    if (id >= kByteOffset && id < kByteVocabSize)
      out.push_back(static_cast<char>(id - kByteOffset));
  return out;
}

}  // namespace ptlab
