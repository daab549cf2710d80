#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "moderoute/error.hpp"
#include "moderoute/simenv.hpp"
#include "support.hpp"

using namespace moderoute;
using moderoute::testing::fixture_env;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

std::size_t brute_overlap(std::string_view query, const CorpusDoc& d) {
  auto q = terms_of(query);
  auto t = terms_of(d.title + " " + d.body);
  std::size_t n = 0;
  for (const auto& w : q) n += t.count(w);
  return n;
}

}  // namespace

TEST_CASE("terms drop function words and case") {
  auto t = terms_of("In what YEAR was the Vellmor Observatory founded?");
  CHECK(t == std::set<std::string>{"year", "vellmor", "observatory", "founded"});
}

TEST_CASE("task generation is deterministic and honours the mixture") {
  auto a = generate_tasks(fixture_env(), 1, 100, {1, 1, 1});
  auto b = generate_tasks(fixture_env(), 1, 100, {1, 1, 1});
  CHECK(a.size() == 100);
  CHECK(a == b);
  CHECK(a != generate_tasks(fixture_env(), 2, 100, {1, 1, 1}));

  auto mix = generate_tasks(fixture_env(), 3, 100, {0.5, 0.25, 0.25});
  std::array<std::size_t, 3> counts{};
  for (const auto& t : mix) ++counts[index_of(t.gold_mode)];
  CHECK(counts == std::array<std::size_t, 3>{50, 25, 25});

  for (const auto& t : generate_tasks(fixture_env(), 4, 60, {0, 0, 1})) {
    CHECK(t.gold_mode == Mode::Agentic);
    CHECK_FALSE(t.required_facts.empty());
  }
  for (const auto& t : a) {
    CHECK(t.difficulty >= 0.0);
    CHECK(t.difficulty <= 1.0);
    CHECK(t.required_facts.empty() == (t.gold_mode != Mode::Agentic));
  }
}

TEST_CASE("invalid mixtures") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([] { generate_tasks(fixture_env(), 1, 10, {-1, 1, 1}); }) == ErrorCode::InvalidWeights);
  CHECK(code_of([] { generate_tasks(fixture_env(), 1, 10, {0, 0, 0}); }) == ErrorCode::InvalidWeights);
  CHECK(code_of([&] { generate_tasks(fixture_env(), 1, 10, {nan, 1, 1}); }) == ErrorCode::InvalidWeights);
  CHECK(code_of([] { generate_tasks(fixture_env(), 1, 0, {1, 1, 1}); }) == ErrorCode::InvalidWeights);
}

TEST_CASE("every generated task is solvable by its gold mode without the policy") {
  for (const auto& t : testing::mixed_tasks(5, 150)) {
    auto info = read_prompt(t.prompt);
    switch (t.gold_mode) {
      case Mode::Instant:
        if (info.family == TaskFamily::Capital) {
          CHECK(recall_capital(info.subject) == t.gold_answer);
        } else {
          CHECK(info.family == TaskFamily::Arithmetic);
          CHECK(expr::evaluate(info.expression).value == t.gold_answer);
        }
        break;
      case Mode::Reasoning:
        CHECK(info.family == TaskFamily::Compute);
        CHECK(expr::evaluate(info.expression).value == t.gold_answer);
        break;
      case Mode::Agentic: {
        CHECK(info.family == TaskFamily::Fact);
        auto script = gold_script(fixture_env(), t);
        REQUIRE(script.size() == 2);
        ToolResponse resp = fixture_env().execute(ToolCall{script});
        REQUIRE(resp.results.size() >= 2);
        const auto& crawl = resp.results.back();
        CHECK(crawl.invocation_id == "gold-2");
        CHECK(extract_fact(crawl.payload, fact_relations()[info.relation].phrase) == t.gold_answer);
        break;
      }
    }
  }
}

TEST_CASE("web_search ranking") {
  const auto& env = fixture_env();
  SUBCASE("a unique match comes first") {
    auto r = env.web_search("Vellmor");
    REQUIRE(r.size() == 1);
    CHECK(r[0].payload.find("url: https://sim.local/vellmor-observatory") != std::string::npos);
    CHECK(r[0].payload.find("title: Vellmor Observatory") != std::string::npos);
    CHECK(r[0].payload.find("snippet: ") != std::string::npos);
  }
  SUBCASE("default k is five") { CHECK(env.web_search("founded located staff").size() == kDefaultSearchResults); }
  SUBCASE("no overlap gives nothing") { CHECK(env.web_search("zzzz qqqq").empty()); }
  SUBCASE("ranking equals an exhaustive scan") {
    for (std::string q : {"research station founded", "quiet well kept observatory", "located in Tibury",
                          "According to the records, how many staff does the Brastow Institute employ?"}) {
      std::vector<std::pair<std::size_t, const CorpusDoc*>> oracle;
      for (const auto& d : env.corpus())
        if (auto s = brute_overlap(q, d); s > 0) oracle.emplace_back(s, &d);
      std::sort(oracle.begin(), oracle.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->doc_id < b.second->doc_id;
      });
      auto got = env.web_search(q, 1000);
      REQUIRE(got.size() == oracle.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].payload.find("url: " + oracle[i].second->url + " ") != std::string::npos);
        CHECK(got[i].token_count == count_symbols(got[i].payload));
      }
    }
  }
}

TEST_CASE("crawl_page") {
  const auto& env = fixture_env();
  const auto* doc = env.find_doc("doc-001");
  REQUIRE(doc);
  auto fact = env.crawl_page(doc->url, "founded");
  CHECK(fact.payload.find("It was founded in 1872.") != std::string::npos);
  CHECK(fact.payload.find("staff") == std::string::npos);
  CHECK(env.crawl_page(doc->url, "submarine").payload == "No relevant information.");
  CHECK(code_of([&] { env.crawl_page("https://sim.local/nowhere", "x"); }) == ErrorCode::UnknownUrl);
}

TEST_CASE("code_execute and tool errors as observations") {
  const auto& env = fixture_env();
  CHECK(env.code_execute("2+3*4").payload == "14");
  CHECK(env.code_execute("pow(2,10)-24").payload == "1000");
  CHECK(code_of([&] { env.code_execute("1/0"); }) == ErrorCode::DivisionByZero);

  ToolCall call{{ToolInvocation{"a", ToolName::CodeExecute, {{"code", "1/0"}}},
                 ToolInvocation{"b", ToolName::CrawlPage, {{"url", "https://nowhere"}, {"query", "x"}}},
                 ToolInvocation{"c", ToolName::CodeExecute, {{"code", "6*7"}}}}};
  auto resp = env.execute(call);
  REQUIRE(resp.results.size() == 3);
  CHECK(resp.results[0].payload.starts_with("Error: DivisionByZero"));
  CHECK(resp.results[1].payload.starts_with("Error: UnknownUrl"));
  CHECK(resp.results[2].payload == "42");
}

TEST_CASE("task files round-trip") {
  auto tasks = testing::mixed_tasks(9, 20);
  auto path = std::filesystem::temp_directory_path() / "moderoute_tasks_roundtrip.jsonl";
  write_tasks(path, tasks);
  CHECK(read_tasks(path) == tasks);
  std::filesystem::remove(path);
}
