#include "ptlab/data.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ptlab/error.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

namespace {

using json = nlohmann::json;

std::string turn_header(const std::string& role) { return "<|" + role + "|>\n"; }

}  // namespace

std::string render_prompt_text(const std::vector<Message>& turns) {
  std::string out;
  for (const auto& t : turns) out += turn_header(t.role) + t.content + "\n";
  out += turn_header("assistant");
  return out;
}

SftExample render_sft_example(const std::vector<Message>& turns, int64_t max_seq_len) {
  if (turns.empty() || turns.back().role != "assistant")
    throw Error(ErrorCategory::data, "conversation has no completion (final turn must be assistant)");

  // prompt: all turns before the last, plus the assistant header
  TokenSeq prompt;
  std::string prompt_text;
  for (size_t i = 0; i + 1 < turns.size(); ++i) {
    const auto& t = turns[i];
    std::string seg = turn_header(t.role) + t.content;
    TokenSeq toks = tokenize(seg);
    prompt.ids.insert(prompt.ids.end(), toks.ids.begin(), toks.ids.end());
    prompt_text += seg;
    if (t.role == "assistant") {
      prompt.ids.push_back(kEosId);
    } else {
      TokenSeq nl = tokenize("\n");
      prompt.ids.insert(prompt.ids.end(), nl.ids.begin(), nl.ids.end());
      prompt_text += "\n";
    }
  }
  {
    std::string head = turn_header("assistant");
    TokenSeq toks = tokenize(head);
    prompt.ids.insert(prompt.ids.end(), toks.ids.begin(), toks.ids.end());
    prompt_text += head;
  }
  prompt.text = prompt_text;

  TokenSeq completion = tokenize(turns.back().content);
  completion.ids.push_back(kEosId);

  // left-truncate the prompt; never the completion
  const int64_t budget = max_seq_len - 1 - static_cast<int64_t>(completion.ids.size());  // 1 for BOS
  if (budget < 0)
    throw Error(ErrorCategory::data, "completion of " + std::to_string(completion.ids.size()) +
                                         " tokens does not fit max_seq_len " +
                                         std::to_string(max_seq_len));
  if (static_cast<int64_t>(prompt.ids.size()) > budget) {
    prompt.ids.erase(prompt.ids.begin(),
                     prompt.ids.end() - static_cast<ptrdiff_t>(budget));
    prompt.text.clear();  // no longer the exact byte rendering
  }
  return SftExample{std::move(prompt), std::move(completion)};
}

namespace {

std::vector<Message> parse_messages(const json& j) {
  if (!j.is_object() || !j.contains("messages") || !j["messages"].is_array())
    throw Error(ErrorCategory::data, "missing \"messages\" array");
  std::vector<Message> turns;
  for (const auto& m : j["messages"]) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
        !m["role"].is_string() || !m["content"].is_string())
      throw Error(ErrorCategory::data, "message entries need string \"role\" and \"content\"");
    std::string role = m["role"].get<std::string>();
    if (role != "system" && role != "user" && role != "assistant")
      throw Error(ErrorCategory::data, "unknown role \"" + role + "\"");
    turns.push_back(Message{std::move(role), m["content"].get<std::string>()});
  }
  if (turns.empty()) throw Error(ErrorCategory::data, "empty conversation");
  return turns;
}

template <class Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line_no, line);
  }
}

}  // namespace

SftLoadResult load_sft(const std::filesystem::path& path, int64_t max_seq_len) {
  SftLoadResult res;
  for_each_jsonl(path, [&](size_t line_no, const std::string& line) {
    try {
      json j = json::parse(line);
      res.examples.push_back(render_sft_example(parse_messages(j), max_seq_len));
    } catch (const json::exception& e) {
      res.diagnostics.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const Error& e) {
      res.diagnostics.push_back({line_no, e.what()});
    }
  });
  if (res.examples.empty())
    throw Error(ErrorCategory::data, "no valid records in " + path.string() + " (" +
                                         std::to_string(res.diagnostics.size()) +
                                         " malformed lines)");
  return res;
}

PreferencePair render_preference_pair(const std::string& prompt, const std::string& chosen,
                                      const std::string& rejected, std::string pair_id,
                                      int64_t max_seq_len) {
  std::vector<Message> turns{{"user", prompt}, {"assistant", ""}};
  // render both completions against the shared prompt, longest first so the
  // truncation budget covers both
  const std::string& longer = chosen.size() >= rejected.size() ? chosen : rejected;
  turns.back().content = longer;
  SftExample base = render_sft_example(turns, max_seq_len);

  PreferencePair pair;
  pair.prompt = base.prompt;
  pair.chosen = tokenize(chosen);
  pair.chosen.ids.push_back(kEosId);
  pair.rejected = tokenize(rejected);
  pair.rejected.ids.push_back(kEosId);
  pair.pair_id = std::move(pair_id);
  return pair;
}

PairLoadResult load_pairs(const std::filesystem::path& path, int64_t max_seq_len) {
  PairLoadResult res;
  for_each_jsonl(path, [&](size_t line_no, const std::string& line) {
    try {
      json j = json::parse(line);
      for (const char* field : {"prompt", "chosen", "rejected"})
        if (!j.contains(field) || !j[field].is_string())
          throw Error(ErrorCategory::data, std::string("missing string field \"") + field + "\"");
      std::string chosen = j["chosen"].get<std::string>();
      std::string rejected = j["rejected"].get<std::string>();
      if (chosen.empty() || rejected.empty())
        throw Error(ErrorCategory::data, "empty completion");
      if (chosen == rejected)
        throw Error(ErrorCategory::data, "identical chosen and rejected completions");
      std::string id = j.contains("id") && j["id"].is_string()
                           ? j["id"].get<std::string>()
                           : "line-" + std::to_string(line_no);
      PreferencePair p = render_preference_pair(j["prompt"].get<std::string>(), chosen, rejected,
                                                std::move(id), max_seq_len);
      if (j.contains("category") && j["category"].is_string())
        p.category = j["category"].get<std::string>();
      res.pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      res.diagnostics.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const Error& e) {
      res.diagnostics.push_back({line_no, e.what()});
    }
  });
  if (res.pairs.empty())
    throw Error(ErrorCategory::data, "no valid records in " + path.string() + " (" +
                                         std::to_string(res.diagnostics.size()) +
                                         " malformed lines)");
  return res;
}

BatchPlan BatchPlan::shuffled(size_t n, int64_t batch_size, uint64_t seed, bool drop_last) {
  BatchPlan plan;
  plan.seed = seed;
  plan.batch_size = batch_size;
  plan.drop_last = drop_last;
  plan.order.resize(n);
  for (size_t i = 0; i < n; ++i) plan.order[i] = i;
  Rng rng(seed);
  rng.shuffle(plan.order);
  return plan;
}

std::vector<std::vector<size_t>> make_batches(size_t n_examples, const BatchPlan& plan) {
  if (plan.batch_size < 1) throw Error(ErrorCategory::config, "batch_size must be >= 1");
  if (plan.order.size() != n_examples)
    throw Error(ErrorCategory::internal,
                "batch plan covers " + std::to_string(plan.order.size()) + " examples, dataset has " +
                    std::to_string(n_examples));

  std::vector<std::vector<size_t>> batches;
  const size_t bs = static_cast<size_t>(plan.batch_size);
  for (size_t start = 0; start < plan.order.size(); start += bs) {
    size_t end = std::min(start + bs, plan.order.size());
    if (plan.drop_last && end - start < bs) break;
    batches.emplace_back(plan.order.begin() + static_cast<ptrdiff_t>(start),
                         plan.order.begin() + static_cast<ptrdiff_t>(end));
  }
  if (batches.empty())
    throw Error(ErrorCategory::data,
                "empty batch plan: batch_size " + std::to_string(plan.batch_size) +
                    " with drop_last exceeds dataset of " + std::to_string(n_examples));
  return batches;
}

}  // namespace ptlab
