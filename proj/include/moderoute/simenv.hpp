#pragma once

// Deterministic stand-in for the agent's outside world: a fixture corpus
// behind web_search / crawl_page, a bounded expression evaluator behind
// code_execute, and a synthetic task generator whose tasks are solvable by
// their gold mode.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "moderoute/expression.hpp"
#include "moderoute/trajectory.hpp"

namespace moderoute {

struct CorpusDoc {
  std::string doc_id;
  std::string url;
  std::string title;
  std::string body;
};

struct Task {
  std::string query_id;
  std::string prompt;
  std::string gold_answer;
  Mode gold_mode = Mode::Instant;
  double difficulty = 0.0;
  std::vector<std::string> required_facts;  // corpus doc ids; nonempty iff agentic

  bool operator==(const Task&) const = default;
};

/// Nonnegative weight per mode, indexed by index_of(Mode).
using MixtureWeights = std::array<double, kModeCount>;

inline constexpr std::size_t kDefaultSearchResults = 5;
inline constexpr std::string_view kNoRelevantInformation = "No relevant information.";

/// Lowercased alphanumeric terms of `text` with common function words removed.
std::set<std::string> terms_of(std::string_view text);
std::size_t overlap_score(const std::set<std::string>& a, const std::set<std::string>& b);

/// Word following `phrase` in `text` with trailing punctuation stripped.
std::optional<std::string> extract_fact(std::string_view text, std::string_view phrase);

// Task families and the query understanding shared by the generator and the
// toy policy.
enum class TaskFamily : std::uint8_t { Capital, Arithmetic, Compute, Fact };

struct FactRelation {
  std::string_view key;
  std::string_view question;  // "{}" stands for the entity title
  std::string_view phrase;    // text preceding the answer in the document
  std::string_view crawl_query;
};

const std::vector<FactRelation>& fact_relations();

/// Country -> capital pairs every mode knows without tools.
const std::vector<std::pair<std::string, std::string>>& common_knowledge();
std::optional<std::string> recall_capital(std::string_view country);

struct PromptInfo {
  TaskFamily family = TaskFamily::Capital;
  std::string expression;     // Arithmetic, Compute
  std::string subject;        // country (Capital) or entity title (Fact)
  std::size_t relation = 0;   // index into fact_relations() (Fact)
};

/// Throws Error(ParseError) for prompts not produced by generate_tasks.
PromptInfo read_prompt(std::string_view prompt);

/// Coarse surface cue of the prompt: 0 recall, 1 computation, 2 lookup.
std::size_t prompt_signal_band(std::string_view prompt);

class Environment {
 public:
  explicit Environment(std::vector<CorpusDoc> docs, expr::Budget budget = {});

  /// Reads newline-delimited JSON records {doc_id, url, title, body}.
  static Environment load(const std::filesystem::path& corpus_path, expr::Budget budget = {});

  const std::vector<CorpusDoc>& corpus() const { return docs_; }
  const CorpusDoc* find_url(std::string_view url) const;
  const CorpusDoc* find_doc(std::string_view doc_id) const;
  const expr::Budget& budget() const { return budget_; }

  /// Top-k documents by term overlap with the query; ties go to the smaller
  /// doc_id, zero-overlap documents are never returned.
  std::vector<ToolResult> web_search(std::string_view query, std::size_t k = kDefaultSearchResults,
                                     const std::string& invocation_id = {}) const;
  /// Sentences of the page sharing a term with the query. Throws UnknownUrl.
  ToolResult crawl_page(std::string_view url, std::string_view query, const std::string& invocation_id = {}) const;
  /// Throws ParseError, BudgetExceeded or DivisionByZero.
  ToolResult code_execute(std::string_view code, const std::string& invocation_id = {}) const;

  /// Runs every invocation of a tool-call step independently; tool errors
  /// come back as "Error: ..." observations rather than exceptions.
  ToolResponse execute(const ToolCall& call) const;

 private:
  std::vector<CorpusDoc> docs_;
  std::vector<std::set<std::string>> doc_terms_;
  std::unordered_map<std::string, std::size_t> by_url_;
  std::unordered_map<std::string, std::size_t> by_id_;
  expr::Budget budget_;
};

/// Tasks drawn in exact proportion to the weights (largest remainder), then
/// shuffled. Deterministic in (seed, n, weights, corpus). Throws InvalidWeights.
std::vector<Task> generate_tasks(const Environment& env, std::uint64_t seed, std::size_t n,
                                 const MixtureWeights& weights);

/// Tool invocations that solve an agentic task: search, then crawl the page
/// holding the fact. Empty for other tasks.
std::vector<ToolInvocation> gold_script(const Environment& env, const Task& task);

void write_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks);
std::vector<Task> read_tasks(const std::filesystem::path& path);
std::vector<CorpusDoc> read_corpus(const std::filesystem::path& path);

}  // namespace moderoute
