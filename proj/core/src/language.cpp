#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ptlab/audit.hpp"

namespace ptlab {

namespace {

// Minimal UTF-8 decode; invalid bytes yield U+FFFD and advance by one.
std::vector<uint32_t> decode_utf8(std::string_view s) {
  std::vector<uint32_t> cps;
  cps.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    uint32_t cp = 0xFFFD;
    size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
      cp = (c & 0x1F) << 6 | (s[i + 1] & 0x3F);
      len = 2;
    } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
      cp = (c & 0x0F) << 12 | (s[i + 1] & 0x3F) << 6 | (s[i + 2] & 0x3F);
      len = 3;
    } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
      cp = (c & 0x07) << 18 | (s[i + 1] & 0x3F) << 12 | (s[i + 2] & 0x3F) << 6 |
           (s[i + 3] & 0x3F);
      len = 4;
    }
    cps.push_back(cp);
    i += len;
  }
  return cps;
}

bool in_range(uint32_t cp, uint32_t lo, uint32_t hi) { return cp >= lo && cp <= hi; }

struct StopwordList {
  const char* language;
  std::initializer_list<const char*> words;
};

// Function words chosen to be distinctive between the listed languages.
const std::array<StopwordList, 11> kLatinStopwords{{
    {"English", {"the", "and", "is", "of", "to", "in", "that", "it", "was", "for", "with", "you", "are"}},
    {"Spanish", {"el", "la", "de", "que", "y", "en", "los", "las", "es", "una", "por", "con", "para", "está"}},
    {"Portuguese", {"o", "de", "que", "e", "em", "os", "uma", "um", "não", "com", "por", "são", "mais", "já"}},
    {"French", {"le", "la", "les", "de", "et", "est", "en", "que", "un", "une", "du", "je", "pas", "pour", "dans"}},
    {"Italian", {"il", "la", "di", "che", "e", "è", "un", "una", "per", "non", "sono", "con", "del", "più"}},
    {"Dutch", {"de", "het", "een", "en", "van", "is", "dat", "niet", "op", "te", "zijn", "voor", "met"}},
    {"German", {"der", "die", "das", "und", "ist", "nicht", "ein", "eine", "zu", "den", "von", "mit", "für", "auf"}},
    {"Polish", {"i", "w", "nie", "na", "się", "jest", "z", "do", "to", "że", "jak", "ale", "był"}},
    {"Turkish", {"bir", "ve", "bu", "için", "de", "da", "ne", "gibi", "çok", "ile", "ama", "daha"}},
    {"Swahili", {"na", "ya", "wa", "kwa", "ni", "za", "katika", "kwamba", "hii", "sana", "lakini", "watu"}},
    {"Vietnamese", {"và", "là", "của", "có", "không", "người", "trong", "được", "một", "cho"}},
}};

const std::unordered_set<std::string>& cyrillic_russian() {
  static const std::unordered_set<std::string> s{"что", "это", "как", "его", "он", "она",
                                                 "был", "мы", "они", "есть", "быть", "или"};
  return s;
}

const std::unordered_set<std::string>& cyrillic_bulgarian() {
  static const std::unordered_set<std::string> s{"да", "се", "това", "той", "тя", "те",
                                                 "съм", "къде", "ще", "които", "след", "или"};
  return s;
}

bool has_urdu_letter(const std::vector<uint32_t>& cps) {
  static const std::unordered_set<uint32_t> urdu{0x06D2, 0x0679, 0x0688, 0x0691,
                                                 0x06BA, 0x06BE, 0x06C1, 0x06CC};
  for (uint32_t cp : cps)
    if (urdu.count(cp)) return true;
  return false;
}

bool is_vietnamese_letter(uint32_t cp) {
  if (in_range(cp, 0x1EA0, 0x1EF9)) return true;  // Latin extended additional (Vietnamese block)
  switch (cp) {
    case 0x01A0: case 0x01A1: case 0x01AF: case 0x01B0:  // ơ ư
    case 0x0111: case 0x0110:                            // đ Đ
      return true;
    default:
      return false;
  }
}

class HeuristicDetector final : public LanguageDetector {
 public:
  std::string classify(std::string_view text) const override {
    auto cps = decode_utf8(text);

    size_t devanagari = 0, cyrillic = 0, arabic = 0, cjk = 0, kana = 0, thai = 0, greek = 0,
           latin = 0, viet = 0;
    for (uint32_t cp : cps) {
      if (in_range(cp, 0x0900, 0x097F)) devanagari++;
      else if (in_range(cp, 0x0400, 0x04FF)) cyrillic++;
      else if (in_range(cp, 0x0600, 0x06FF) || in_range(cp, 0x0750, 0x077F)) arabic++;
      else if (in_range(cp, 0x4E00, 0x9FFF)) cjk++;
      else if (in_range(cp, 0x3040, 0x30FF)) kana++;
      else if (in_range(cp, 0x0E00, 0x0E7F)) thai++;
      else if (in_range(cp, 0x0370, 0x03FF)) greek++;
      else if (in_range(cp, 'a', 'z') || in_range(cp, 'A', 'Z')) latin++;
      if (is_vietnamese_letter(cp)) viet++;
    }

    const size_t scripted = devanagari + cyrillic + arabic + cjk + kana + thai + greek;
    if (scripted > 0 && scripted * 2 >= latin) {
      if (kana > 0) return "Japanese";
      if (cjk >= std::max({devanagari, cyrillic, arabic, thai, greek})) {
        if (cjk > 0) return "Chinese";
      }
      if (devanagari >= std::max({cyrillic, arabic, thai, greek})) {
        if (devanagari > 0) return "Hindi";
      }
      if (thai >= std::max({cyrillic, arabic, greek}) && thai > 0) return "Thai";
      if (greek >= std::max({cyrillic, arabic}) && greek > 0) return "Greek";
      if (arabic >= cyrillic && arabic > 0)
        return has_urdu_letter(cps) ? "Urdu" : "Arabic";
      if (cyrillic > 0) {
        size_t ru = 0, bg = 0;
        for (const auto& w : normalize(text)) {
          ru += cyrillic_russian().count(w);
          bg += cyrillic_bulgarian().count(w);
        }
        return bg > ru ? "Bulgarian" : "Russian";
      }
    }

    // Latin scripts: Vietnamese by its diacritic block, then stopwords.
    if (viet > 0) return "Vietnamese";

    auto words = normalize(text);
    const char* best = "English";
    size_t best_hits = 0;
    for (const auto& list : kLatinStopwords) {
      std::unordered_set<std::string> set;
      for (const char* w : list.words) set.insert(w);
      size_t hits = 0;
      for (const auto& w : words) hits += set.count(w);
      if (hits > best_hits) {
        best_hits = hits;
        best = list.language;
      }
    }
    return best;
  }
};

}  // namespace

std::unique_ptr<LanguageDetector> make_heuristic_detector() {
  return std::make_unique<HeuristicDetector>();
}

}  // namespace ptlab
