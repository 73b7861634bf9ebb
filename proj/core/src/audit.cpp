#include "ptlab/audit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ptlab/digest.hpp"
#include "ptlab/error.hpp"

namespace ptlab {

namespace {

using json = nlohmann::json;

constexpr char kGramSep = '\x1f';

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80) {
      if (std::isalnum(c)) {
        cur.push_back(static_cast<char>(std::tolower(c)));
      } else {
        // ASCII punctuation and whitespace both split
        if (!cur.empty()) {
          tokens.push_back(std::move(cur));
          cur.clear();
        }
      }
    } else {
      cur.push_back(static_cast<char>(c));  // multi-byte sequences kept verbatim
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

NgramIndex::NgramIndex(int n, bool exact) : n_(n), exact_(exact) {
  if (n < 1) throw Error(ErrorCategory::config, "ngram n must be >= 1");
}

namespace {

std::string join_gram(std::span<const std::string> tokens, size_t start, size_t len) {
  std::string out;
  for (size_t i = 0; i < len; ++i) {
    if (i) out.push_back(kGramSep);
    out += tokens[start + i];
  }
  return out;
}

template <class Fn>
void for_each_gram(const std::vector<std::string>& tokens, int n, Fn&& fn) {
  if (tokens.empty()) return;
  const size_t nn = static_cast<size_t>(n);
  if (tokens.size() < nn) {
    fn(0, tokens.size());
    return;
  }
  for (size_t i = 0; i + nn <= tokens.size(); ++i) fn(i, nn);
}

}  // namespace

void NgramIndex::add_document(std::string_view text) {
  auto tokens = normalize(text);
  for_each_gram(tokens, n_, [&](size_t start, size_t len) {
    std::string gram = join_gram(tokens, start, len);
    if (exact_)
      grams_.insert(std::move(gram));
    else
      hashes_.insert(fnv1a64(gram));
  });
  doc_count_ += 1;
}

bool NgramIndex::contains_any(std::string_view text) const {
  auto tokens = normalize(text);
  bool hit = false;
  for_each_gram(tokens, n_, [&](size_t start, size_t len) {
    if (hit) return;
    std::string gram = join_gram(tokens, start, len);
    if (exact_ ? grams_.count(gram) > 0 : hashes_.count(fnv1a64(gram)) > 0) hit = true;
  });
  return hit;
}

std::vector<std::string> load_jsonl_texts(const std::filesystem::path& path,
                                          const std::vector<std::string>& fields) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  std::vector<std::string> texts;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCategory::data,
                  path.string() + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    std::string text;
    auto append_field = [&](const std::string& field) {
      if (j.contains(field) && j[field].is_string()) {
        if (!text.empty()) text += ' ';
        text += j[field].get<std::string>();
        return true;
      }
      return false;
    };
    if (!fields.empty()) {
      for (const auto& field : fields) append_field(field);
    } else if (!append_field("text")) {
      append_field("prompt");
      append_field("answer");
    }
    texts.push_back(std::move(text));
  }
  return texts;
}

NgramIndex build_index(const std::vector<std::filesystem::path>& train_paths, int n, bool exact,
                       const std::vector<std::string>& fields) {
  NgramIndex index(n, exact);
  for (const auto& path : train_paths) {
    if (!std::filesystem::exists(path))
      throw Error(ErrorCategory::io, "training corpus not found: " + path.string());
    for (const auto& text : load_jsonl_texts(path, fields)) index.add_document(text);
  }
  return index;
}

ContaminationRow contamination(const NgramIndex& index, std::span<const std::string> items,
                               const std::string& benchmark_name) {
  if (items.empty())
    throw Error(ErrorCategory::data, "empty benchmark: " + benchmark_name);
  ContaminationRow row;
  row.benchmark = benchmark_name;
  row.total = items.size();
  for (const auto& item : items)
    if (index.contains_any(item)) row.contaminated += 1;
  row.percent = 100.0 * static_cast<double>(row.contaminated) / static_cast<double>(row.total);
  return row;
}

ContaminationReport audit_report(const std::vector<std::filesystem::path>& train_paths,
                                 const std::vector<std::filesystem::path>& bench_paths, int n,
                                 bool exact, const std::vector<std::string>& fields) {
  ContaminationReport report;
  report.n = n;
  report.exact = exact;
  {
    std::string id;
    for (const auto& p : train_paths) {
      if (!id.empty()) id += ",";
      id += p.filename().string();
    }
    report.train_corpus_id = id;
  }
  NgramIndex index = build_index(train_paths, n, exact, fields);
  for (const auto& bench : bench_paths) {
    if (!std::filesystem::exists(bench))
      throw Error(ErrorCategory::io, "benchmark file not found: " + bench.string());
    auto items = load_jsonl_texts(bench, fields);
    std::string name = bench.stem().string();
    report.rows.push_back(contamination(index, items, name));
  }
  return report;
}

namespace {

std::string pct2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", v);
  return buf;
}

}  // namespace

std::string render_contamination_table(const ContaminationReport& report) {
  std::ostringstream os;
  os << "Contamination of benchmarks in " << report.train_corpus_id << " (n=" << report.n
     << ", rule=" << report.rule << (report.exact ? ", exact grams" : "") << ")\n";

  size_t name_w = std::string("Benchmark").size();
  for (const auto& r : report.rows) name_w = std::max(name_w, r.benchmark.size());

  auto line = [&](const std::string& a, const std::string& b) {
    os << a << std::string(name_w - a.size() + 2, ' ') << b << '\n';
  };
  line("Benchmark", "Contamination");
  os << std::string(name_w, '-') << "  " << std::string(13, '-') << '\n';
  for (const auto& r : report.rows) line(r.benchmark, pct2(r.percent));
  if (!report.exact)
    os << "(64-bit gram hashes; collision probability < 2^-32 per membership query)\n";
  return os.str();
}

std::string contamination_report_json(const ContaminationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back(json{{"benchmark", r.benchmark},
                        {"percent", r.percent},
                        {"contaminated", r.contaminated},
                        {"total", r.total}});
  json j{{"train_corpus", report.train_corpus_id},
         {"n", report.n},
         {"rule", report.rule},
         {"exact", report.exact},
         {"rows", rows}};
  return j.dump(2);
}

std::vector<LanguageShare> language_distribution(std::span<const std::string> docs,
                                                 const LanguageDetector& detector) {
  std::vector<std::pair<std::string, size_t>> counts;
  for (const auto& doc : docs) {
    std::string lang = detector.classify(doc);
    auto it = std::find_if(counts.begin(), counts.end(),
                           [&](const auto& kv) { return kv.first == lang; });
    if (it == counts.end())
      counts.emplace_back(lang, 1);
    else
      it->second += 1;
  }
  std::vector<LanguageShare> shares;
  shares.reserve(counts.size());
  for (const auto& [lang, count] : counts)
    shares.push_back(
        {lang, 100.0 * static_cast<double>(count) / static_cast<double>(docs.size())});
  std::sort(shares.begin(), shares.end(), [](const LanguageShare& a, const LanguageShare& b) {
    if (a.percent != b.percent) return a.percent > b.percent;
    return a.language < b.language;
  });
  return shares;
}

std::string render_language_table(std::span<const LanguageShare> shares) {
  size_t name_w = std::string("Language").size();
  for (const auto& s : shares) name_w = std::max(name_w, s.language.size());

  std::ostringstream os;
  auto line = [&](const std::string& a, const std::string& b) {
    os << a << std::string(name_w - a.size() + 2, ' ') << b << '\n';
  };
  line("Language", "Presence (%)");
  os << std::string(name_w, '-') << "  " << std::string(12, '-') << '\n';
  for (const auto& s : shares) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", s.percent);
    line(s.language, buf);
  }
  return os.str();
}

}  // namespace ptlab
