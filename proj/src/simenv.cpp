#include "moderoute/simenv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include "json.hpp"

#include "moderoute/error.hpp"
#include "moderoute/rng.hpp"

namespace moderoute {

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a", "an", "and", "are", "as", "at", "by", "does", "for", "how", "in", "is",
      "it", "its", "of", "on", "the", "to", "was", "what", "which", "who", "with"};
  return words;
}

constexpr std::string_view kFactLead = "According to the records, ";
constexpr std::string_view kComputeLead = "Compute the value of ";
constexpr std::string_view kCapitalLead = "What is the capital of ";
constexpr std::string_view kArithmeticLead = "What is ";

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::vector<std::string> sentences_of(std::string_view body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < body.size()) {
    std::size_t end = body.find(". ", start);
    std::size_t stop = end == std::string_view::npos ? body.size() : end + 1;
    std::string_view s = body.substr(start, stop - start);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (!s.empty()) out.emplace_back(s);
    if (end == std::string_view::npos) break;
    start = end + 2;
  }
  return out;
}

std::string first_words(std::string_view text, std::size_t n) {
  auto words = split_symbols(text);
  std::string out;
  for (std::size_t i = 0; i < std::min(n, words.size()); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  if (words.size() > n) out += " ...";
  return out;
}

std::string format_template(std::string_view tmpl, std::string_view value) {
  std::string out(tmpl);
  auto pos = out.find("{}");
  if (pos != std::string::npos) out.replace(pos, 2, value);
  return out;
}

std::string arithmetic_expression(Rng& rng) {
  static constexpr std::array<char, 3> ops = {'+', '-', '*'};
  auto a = 2 + rng.next() % 19;
  auto b = 2 + rng.next() % 19;
  return fmt::format("{} {} {}", a, ops[rng.next() % ops.size()], b);
}

std::string compute_expression(Rng& rng) {
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1)); };
  switch (rng.next() % 4) {
    case 0: return fmt::format("({}*{}-{})%{}", pick(11, 39), pick(11, 39), pick(1, 99), pick(3, 17));
    case 1: return fmt::format("{}*({}+{})-{}", pick(6, 29), pick(11, 49), pick(11, 49), pick(1, 99));
    case 2: return fmt::format("pow({},2)+{}*{}-{}", pick(3, 15), pick(6, 19), pick(6, 19), pick(1, 99));
    default: return fmt::format("({}+{})*({}-{})", pick(11, 49), pick(11, 49), pick(50, 99), pick(1, 49));
  }
}

bool has_all_relations(const CorpusDoc& doc) {
  return std::all_of(fact_relations().begin(), fact_relations().end(),
                     [&](const FactRelation& r) { return extract_fact(doc.body, r.phrase).has_value(); });
}

double difficulty_for(std::uint64_t seed, const std::string& query_id, Mode gold) {
  static constexpr std::array<std::pair<double, double>, kModeCount> ranges = {
      std::pair{0.05, 0.45}, std::pair{0.35, 0.75}, std::pair{0.55, 0.95}};
  auto [lo, hi] = ranges[index_of(gold)];
  Rng rng(stream_seed(seed, "difficulty:" + query_id));
  return lo + (hi - lo) * rng.uniform();
}

std::string read_file_lines_error(const std::filesystem::path& path) {
  return "cannot open '" + path.string() + "'";
}

template <typename F>
void for_each_record(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, read_file_lines_error(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorCode::Io, fmt::format("{}:{}: not a JSON object", path.string(), lineno));
    try {
      f(j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
}

}  // namespace

std::set<std::string> terms_of(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stopwords().contains(cur)) out.insert(cur);
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else
      flush();
  }
  flush();
  return out;
}

std::size_t overlap_score(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

std::optional<std::string> extract_fact(std::string_view text, std::string_view phrase) {
  auto pos = text.find(phrase);
  if (pos == std::string_view::npos) return std::nullopt;
  pos += phrase.size();
  while (pos < text.size() && text[pos] == ' ') ++pos;
  std::size_t end = pos;
  while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
  std::string word(text.substr(pos, end - pos));
  while (!word.empty() && std::string_view(".,;:").find(word.back()) != std::string_view::npos) word.pop_back();
  if (word.empty()) return std::nullopt;
  return word;
}

const std::vector<FactRelation>& fact_relations() {
  static const std::vector<FactRelation> relations = {
      {"founded", "in what year was the {} founded?", "founded in", "founded"},
      {"located", "in which city is the {} located?", "located in", "located city"},
      {"staff", "how many staff does the {} employ?", "staff of", "staff employs"},
  };
  return relations;
}

const std::vector<std::pair<std::string, std::string>>& common_knowledge() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"China", "Beijing"},   {"France", "Paris"},    {"Japan", "Tokyo"},     {"Italy", "Rome"},
      {"Egypt", "Cairo"},     {"Kenya", "Nairobi"},   {"Peru", "Lima"},       {"Norway", "Oslo"},
      {"Spain", "Madrid"},    {"Germany", "Berlin"},  {"Russia", "Moscow"},   {"Canada", "Ottawa"},
      {"Greece", "Athens"},   {"Austria", "Vienna"},  {"Portugal", "Lisbon"}, {"Chile", "Santiago"},
      {"Cuba", "Havana"},     {"Ireland", "Dublin"},  {"Poland", "Warsaw"},   {"Thailand", "Bangkok"},
  };
  return table;
}

std::optional<std::string> recall_capital(std::string_view country) {
  for (const auto& [c, capital] : common_knowledge())
    if (c == country) return capital;
  return std::nullopt;
}

PromptInfo read_prompt(std::string_view prompt) {
  PromptInfo info;
  if (starts_with(prompt, kFactLead)) {
    info.family = TaskFamily::Fact;
    auto rest = prompt.substr(kFactLead.size());
    const auto& rels = fact_relations();
    for (std::size_t r = 0; r < rels.size(); ++r) {
      auto q = rels[r].question;
      auto hole = q.find("{}");
      auto head = q.substr(0, hole);
      auto tail = q.substr(hole + 2);
      if (starts_with(rest, head) && rest.size() >= head.size() + tail.size() &&
          rest.substr(rest.size() - tail.size()) == tail) {
        info.relation = r;
        info.subject = std::string(rest.substr(head.size(), rest.size() - head.size() - tail.size()));
        return info;
      }
    }
  } else if (starts_with(prompt, kComputeLead) && prompt.back() == '.') {
    info.family = TaskFamily::Compute;
    info.expression = std::string(prompt.substr(kComputeLead.size(), prompt.size() - kComputeLead.size() - 1));
    return info;
  } else if (starts_with(prompt, kCapitalLead) && prompt.back() == '?') {
    info.family = TaskFamily::Capital;
    info.subject = std::string(prompt.substr(kCapitalLead.size(), prompt.size() - kCapitalLead.size() - 1));
    return info;
  } else if (starts_with(prompt, kArithmeticLead) && prompt.back() == '?') {
    info.family = TaskFamily::Arithmetic;
    info.expression =
        std::string(prompt.substr(kArithmeticLead.size(), prompt.size() - kArithmeticLead.size() - 1));
    return info;
  }
  throw Error(ErrorCode::ParseError, "unrecognized prompt '" + std::string(prompt) + "'");
}

std::size_t prompt_signal_band(std::string_view prompt) {
  if (starts_with(prompt, kFactLead)) return 2;
  if (starts_with(prompt, kComputeLead)) return 1;
  return 0;
}

Environment::Environment(std::vector<CorpusDoc> docs, expr::Budget budget)
    : docs_(std::move(docs)), budget_(budget) {
  doc_terms_.reserve(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    const auto& d = docs_[i];
    if (!by_url_.emplace(d.url, i).second) throw Error(ErrorCode::Io, "duplicate url '" + d.url + "'");
    if (!by_id_.emplace(d.doc_id, i).second) throw Error(ErrorCode::Io, "duplicate doc_id '" + d.doc_id + "'");
    doc_terms_.push_back(terms_of(d.title + " " + d.body));
  }
}

Environment Environment::load(const std::filesystem::path& corpus_path, expr::Budget budget) {
  return Environment(read_corpus(corpus_path), budget);
}

const CorpusDoc* Environment::find_url(std::string_view url) const {
  auto it = by_url_.find(std::string(url));
  return it == by_url_.end() ? nullptr : &docs_[it->second];
}

const CorpusDoc* Environment::find_doc(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::vector<ToolResult> Environment::web_search(std::string_view query, std::size_t k,
                                                const std::string& invocation_id) const {
  auto q = terms_of(query);
  std::vector<std::pair<std::size_t, std::size_t>> scored;  // (score, doc index)
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    auto s = overlap_score(q, doc_terms_[i]);
    if (s > 0) scored.emplace_back(s, i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return docs_[a.second].doc_id < docs_[b.second].doc_id;
  });
  if (scored.size() > k) scored.resize(k);
  std::vector<ToolResult> out;
  out.reserve(scored.size());
  for (auto [score, i] : scored) {
    const auto& d = docs_[i];
    out.push_back(make_tool_result(invocation_id,
                                   fmt::format("title: {} | url: {} | snippet: {}", d.title, d.url, first_words(d.body, 6))));
  }
  return out;
}

ToolResult Environment::crawl_page(std::string_view url, std::string_view query,
                                   const std::string& invocation_id) const {
  const CorpusDoc* doc = find_url(url);
  if (!doc) throw Error(ErrorCode::UnknownUrl, "no page at '" + std::string(url) + "'");
  auto q = terms_of(query);
  std::string payload;
  for (const auto& sentence : sentences_of(doc->body)) {
    if (overlap_score(q, terms_of(sentence)) == 0) continue;
    if (!payload.empty()) payload += ' ';
    payload += sentence;
  }
  if (payload.empty()) payload = std::string(kNoRelevantInformation);
  return make_tool_result(invocation_id, std::move(payload));
}

ToolResult Environment::code_execute(std::string_view code, const std::string& invocation_id) const {
  return make_tool_result(invocation_id, expr::evaluate(code, budget_).value);
}

ToolResponse Environment::execute(const ToolCall& call) const {
  ToolResponse response;
  for (const auto& inv : call.invocations) {
    auto arg = [&](const char* key) -> std::string {
      auto it = inv.arguments.find(key);
      return it == inv.arguments.end() ? std::string() : it->second;
    };
    try {
      if (!has_required_arguments(inv))
        throw Error(ErrorCode::ParseError, "bad arguments for " + std::string(tool_name(inv.name)));
      switch (inv.name) {
        case ToolName::WebSearch: {
          auto results = web_search(arg("query"), kDefaultSearchResults, inv.id);
          if (results.empty()) results.push_back(make_tool_result(inv.id, "No results."));
          for (auto& r : results) response.results.push_back(std::move(r));
          break;
        }
        case ToolName::CrawlPage: response.results.push_back(crawl_page(arg("url"), arg("query"), inv.id)); break;
        case ToolName::CodeExecute: response.results.push_back(code_execute(arg("code"), inv.id)); break;
      }
    } catch (const Error& e) {
      response.results.push_back(make_tool_result(inv.id, std::string("Error: ") + e.what()));
    }
  }
  return response;
}

std::vector<Task> generate_tasks(const Environment& env, std::uint64_t seed, std::size_t n,
                                 const MixtureWeights& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::InvalidWeights, "weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) throw Error(ErrorCode::InvalidWeights, "weights must have a positive sum");
  if (n == 0) throw Error(ErrorCode::InvalidWeights, "need at least one task");

  // Largest-remainder apportionment, remainder ties to the cheaper mode.
  std::array<std::size_t, kModeCount> counts{};
  std::array<double, kModeCount> remainder{};
  std::size_t assigned = 0;
  for (std::size_t m = 0; m < kModeCount; ++m) {
    double exact = static_cast<double>(n) * weights[m] / total;
    counts[m] = static_cast<std::size_t>(std::floor(exact));
    remainder[m] = exact - static_cast<double>(counts[m]);
    assigned += counts[m];
  }
  std::array<std::size_t, kModeCount> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % kModeCount]];

  std::vector<Mode> modes;
  modes.reserve(n);
  for (Mode m : kModes) modes.insert(modes.end(), counts[index_of(m)], m);
  Rng shuffler(stream_seed(seed, "task-order"));
  shuffle(modes, shuffler);

  std::vector<const CorpusDoc*> fact_docs;
  for (const auto& d : env.corpus())
    if (has_all_relations(d)) fact_docs.push_back(&d);
  if (counts[index_of(Mode::Agentic)] > 0 && fact_docs.empty())
    throw Error(ErrorCode::InvalidWeights, "corpus has no fact documents for agentic tasks");

  std::vector<Task> tasks;
  tasks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Task t;
    t.query_id = fmt::format("q{:05d}", i);
    t.gold_mode = modes[i];
    Rng rng(stream_seed(seed, "task:" + t.query_id));
    switch (t.gold_mode) {
      case Mode::Instant:
        if (rng.next() % 2 == 0) {
          const auto& [country, capital] = common_knowledge()[rng.next() % common_knowledge().size()];
          t.prompt = std::string(kCapitalLead) + country + "?";
          t.gold_answer = capital;
        } else {
          auto e = arithmetic_expression(rng);
          t.prompt = std::string(kArithmeticLead) + e + "?";
          t.gold_answer = expr::evaluate(e).value;
        }
        break;
      case Mode::Reasoning: {
        auto e = compute_expression(rng);
        t.prompt = std::string(kComputeLead) + e + ".";
        t.gold_answer = expr::evaluate(e).value;
        break;
      }
      case Mode::Agentic: {
        const CorpusDoc* doc = fact_docs[rng.next() % fact_docs.size()];
        const auto& rel = fact_relations()[rng.next() % fact_relations().size()];
        t.prompt = std::string(kFactLead) + format_template(rel.question, doc->title);
        t.gold_answer = *extract_fact(doc->body, rel.phrase);
        t.required_facts = {doc->doc_id};
        break;
      }
    }
    t.difficulty = difficulty_for(seed, t.query_id, t.gold_mode);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<ToolInvocation> gold_script(const Environment& env, const Task& task) {
  if (task.gold_mode != Mode::Agentic || task.required_facts.empty()) return {};
  const CorpusDoc* doc = env.find_doc(task.required_facts.front());
  if (!doc) throw Error(ErrorCode::UnknownUrl, "task references unknown doc '" + task.required_facts.front() + "'");
  auto info = read_prompt(task.prompt);
  return {
      ToolInvocation{"gold-1", ToolName::WebSearch, {{"query", task.prompt}}},
      ToolInvocation{"gold-2", ToolName::CrawlPage,
                     {{"url", doc->url}, {"query", std::string(fact_relations()[info.relation].crawl_query)}}},
  };
}

void write_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  for (const auto& t : tasks) {
    nlohmann::json j;
    j["query_id"] = t.query_id;
    j["prompt"] = t.prompt;
    j["gold_answer"] = t.gold_answer;
    j["gold_mode"] = std::string(mode_name(t.gold_mode));
    j["difficulty"] = t.difficulty;
    j["required_facts"] = t.required_facts;
    out << j.dump() << '\n';
  }
}

std::vector<Task> read_tasks(const std::filesystem::path& path) {
  std::vector<Task> tasks;
  for_each_record(path, [&](const nlohmann::json& j) {
    Task t;
    t.query_id = j.at("query_id").get<std::string>();
    t.prompt = j.at("prompt").get<std::string>();
    t.gold_answer = j.at("gold_answer").get<std::string>();
    auto mode = mode_from_name(j.at("gold_mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::Io, "unknown gold_mode in task '" + t.query_id + "'");
    t.gold_mode = *mode;
    t.difficulty = j.at("difficulty").get<double>();
    t.required_facts = j.value("required_facts", std::vector<std::string>{});
    tasks.push_back(std::move(t));
  });
  return tasks;
}

std::vector<CorpusDoc> read_corpus(const std::filesystem::path& path) {
  std::vector<CorpusDoc> docs;
  for_each_record(path, [&](const nlohmann::json& j) {
    docs.push_back({j.at("doc_id").get<std::string>(), j.at("url").get<std::string>(),
                    j.at("title").get<std::string>(), j.at("body").get<std::string>()});
  });
  return docs;
}

}  // namespace moderoute
