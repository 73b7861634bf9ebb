#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ptlab {

// Normalization ahead of n-gram hashing: ASCII lowercase, punctuation to
// spaces, whitespace split. Multi-byte UTF-8 sequences pass through
// verbatim (inputs are assumed NFC). Idempotent.
std::vector<std::string> normalize(std::string_view text);

// Token n-gram membership index over a training corpus. Grams are stored as
// 64-bit FNV-1a hashes by default (collision probability stated in report
// footers); exact mode stores the joined token strings for verification
// runs. Documents shorter than n contribute their full token sequence as a
// single gram.
class NgramIndex {
 public:
  explicit NgramIndex(int n, bool exact = false);

  int n() const { return n_; }
  bool exact() const { return exact_; }
  size_t doc_count() const { return doc_count_; }
  size_t gram_count() const { return exact_ ? grams_.size() : hashes_.size(); }

  void add_document(std::string_view text);
  // Any-single-hit rule: true iff at least one gram of `text` is indexed.
  bool contains_any(std::string_view text) const;

 private:
  int n_;
  bool exact_;
  size_t doc_count_ = 0;
  std::unordered_set<uint64_t> hashes_;
  std::unordered_set<std::string> grams_;
};

struct ContaminationRow {
  std::string benchmark;
  double percent = 0.0;  // rendered to 2 decimals
  size_t contaminated = 0;
  size_t total = 0;
};

struct ContaminationReport {
  std::vector<ContaminationRow> rows;
  std::string train_corpus_id;
  int n = 8;
  std::string rule = "any-single-hit";
  bool exact = false;
};

// JSON-lines benchmark/corpus reader. Each record's text is the
// concatenation of the requested fields; with an empty field list, "text"
// is used when present, else "prompt" + " " + "answer".
std::vector<std::string> load_jsonl_texts(const std::filesystem::path& path,
                                          const std::vector<std::string>& fields);

NgramIndex build_index(const std::vector<std::filesystem::path>& train_paths, int n, bool exact,
                       const std::vector<std::string>& fields);

// A benchmark item is contaminated iff >= 1 of its n-grams is indexed.
// Throws Error(data) on an empty benchmark.
ContaminationRow contamination(const NgramIndex& index, std::span<const std::string> items,
                               const std::string& benchmark_name);

// One row per benchmark file, in input order.
ContaminationReport audit_report(const std::vector<std::filesystem::path>& train_paths,
                                 const std::vector<std::filesystem::path>& bench_paths, int n,
                                 bool exact, const std::vector<std::string>& fields);

// Two-column aligned text table ("Benchmark" / "Contamination", percents
// with 2 decimals), with header recording n and the hit rule and a footer
// noting the hash-collision bound in hashed mode.
std::string render_contamination_table(const ContaminationReport& report);
std::string contamination_report_json(const ContaminationReport& report);

// ---------------------------------------------------------------------------
// language distribution
// ---------------------------------------------------------------------------

struct LanguageDetector {
  virtual ~LanguageDetector() = default;
  virtual std::string classify(std::string_view text) const = 0;
};

// Stopword / character-class heuristic over ~20 languages. A stand-in for a
// real classifier behind the same interface.
std::unique_ptr<LanguageDetector> make_heuristic_detector();

struct LanguageShare {
  std::string language;
  double percent = 0.0;
};

// Per-document classification; shares sum to 100 up to rounding, sorted
// descending (ties alphabetical).
std::vector<LanguageShare> language_distribution(std::span<const std::string> docs,
                                                 const LanguageDetector& detector);

std::string render_language_table(std::span<const LanguageShare> shares);

}  // namespace ptlab
