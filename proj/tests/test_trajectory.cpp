#include "doctest.h"
#include "moderoute/error.hpp"
#include "moderoute/trajectory.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace moderoute;
using moderoute::testing::kinds_of;
using moderoute::testing::template_oracle;

namespace {

Trajectory instant_answer(std::string answer, bool injected = false) {
  return Trajectory("q1", {Segment::classification(Mode::Instant, injected), Segment(Answer{std::move(answer)})});
}

ToolInvocation search(std::string id, std::string query) {
  return {std::move(id), ToolName::WebSearch, {{"query", std::move(query)}}};
}

Trajectory two_call_agentic() {
  return Trajectory(
      "q2", {Segment::classification(Mode::Agentic, false), Segment(Plan{"find the year"}),
             Segment(ToolCall{{search("c1", "vellmor observatory")}}),
             Segment(ToolResponse{{make_tool_result("c1", "title: Vellmor Observatory | url: https://x")}},
                     Origin::Observation),
             Segment(Summary{"found the page"}),
             Segment(ToolCall{{ToolInvocation{"c2", ToolName::CrawlPage, {{"url", "https://x"}, {"query", "founded"}}}}}),
             Segment(ToolResponse{{make_tool_result("c2", "It was founded in 1911.")}}, Origin::Observation),
             Segment(Answer{"1911"})});
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

Segment sample_segment(SegmentKind k) {
  switch (k) {
    case SegmentKind::Classification: return Segment::classification(Mode::Reasoning, false);
    case SegmentKind::Plan: return Segment(Plan{"a plan"});
    case SegmentKind::Reasoning: return Segment(Reasoning{"some thought"});
    case SegmentKind::ToolCall: return Segment(ToolCall{{search("z1", "anything")}});
    case SegmentKind::ToolResponse: return Segment(ToolResponse{{make_tool_result("z1", "ok")}}, Origin::Observation);
    case SegmentKind::Summary: return Segment(Summary{"so far"});
    case SegmentKind::Answer: return Segment(Answer{"x"});
  }
  throw std::logic_error("unreachable");
}

ErrorCode parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse accepted malformed input");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("mode tags map bijectively") {
  CHECK(mode_tag(Mode::Instant) == "instant_agent");
  CHECK(mode_tag(Mode::Reasoning) == "reasoning_agent");
  CHECK(mode_tag(Mode::Agentic) == "agentic_agent");
  for (Mode m : kModes) {
    CHECK(mode_from_tag(mode_tag(m)) == m);
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_FALSE(mode_from_tag("default_agent"));
}

TEST_CASE("instant trajectory serializes to the answer template") {
  CHECK(serialize(instant_answer("Beijing")) ==
        "<classification>\ninstant_agent\n</classification>\n<answer>\nBeijing\n</answer>");
}

TEST_CASE("empty reasoning keeps the skeleton") {
  Trajectory t("q", {Segment::classification(Mode::Reasoning, false), Segment(Reasoning{""}), Segment(Answer{"7"})});
  const std::string text = serialize(t);
  CHECK(text == "<classification>\nreasoning_agent\n</classification>\n<reasoning>\n</reasoning>\n<answer>\n7\n</answer>");
  CHECK(parse(text, "q") == t);
}

TEST_CASE("two tool calls survive a round trip in order") {
  Trajectory t = two_call_agentic();
  const std::string text = serialize(t);
  CHECK(count_of(text, "<tool_call>") == 2);
  CHECK(count_of(text, "<tool_response>") == 2);
  Trajectory back = parse(text, "q2");
  CHECK(back == t);
  auto kinds = kinds_of(back.segments());
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i] == SegmentKind::ToolCall) CHECK(kinds.at(i + 1) == SegmentKind::ToolResponse);
}

TEST_CASE("forced prefixes carry the enforced sentences verbatim") {
  CHECK(enforced_rationale(Mode::Reasoning) ==
        "This task requires complex logical reasoning (such as mathematical proofs, multi-step problem solving) "
        "and causal analysis, so I will select reasoning_agent.");
  CHECK(enforced_rationale(Mode::Agentic) ==
        "This task requires acquiring real-world information (such as news and data) or executing code (such as "
        "programming problems, data processing, or statistics), so I will select agentic_agent.");
  CHECK(enforced_rationale(Mode::Instant) ==
        "This task needs no real-world info, code, or complex reasoning—just basic knowledge or brief "
        "responses, so I will select instant_agent.");
  for (Mode m : kModes) {
    CHECK(enforced_prefix(m) ==
          std::string(enforced_rationale(m)) + "\n<classification>\n" + std::string(mode_tag(m)) + "\n</classification>");
  }
}

TEST_CASE("parse infers the injected origin from the enforced sentence") {
  Trajectory forced = instant_answer("Paris", true);
  Trajectory back = parse(serialize(forced), "q1");
  CHECK(back == forced);
  CHECK(back.segments().front().origin() == Origin::InjectedPrefix);
  CHECK(parse(serialize(instant_answer("Paris")), "q1").segments().front().origin() == Origin::ModelGenerated);
}

TEST_CASE("parse rejects malformed input with the right error") {
  CHECK(parse_error("<classification>\ninstant_agent\n</classification>\n<tool_call>\n"
                    "{\"arguments\":{\"query\":\"x\"},\"id\":\"a\",\"name\":\"web_search\"}\n</tool_call>\n"
                    "<answer>\nx\n</answer>") == ErrorCode::OrderViolation);
  CHECK(parse_error("<classification>default_agent</classification><answer>x</answer>") == ErrorCode::UnknownMode);
  CHECK(parse_error("<classification>\ninstant_agent\n</classification>\n<answer>\nx\n") == ErrorCode::MalformedTag);
  CHECK(parse_error("<classification>\ninstant_agent\n</classification>\n<verdict>\nx\n</verdict>") ==
        ErrorCode::MalformedTag);
  CHECK(parse_error("<classification>\ninstant_agent\n<answer>\n</classification>\nx\n</answer>") ==
        ErrorCode::MalformedTag);
  CHECK(parse_error("<answer>\nx\n</answer>\n<classification>\ninstant_agent\n</classification>") ==
        ErrorCode::OrderViolation);
  CHECK(parse_error("<classification>\nreasoning_agent\n</classification>\n<answer>\nx\n</answer>\n"
                    "<reasoning>\ny\n</reasoning>") == ErrorCode::OrderViolation);
}

TEST_CASE("segments refuse origins their kind cannot have") {
  CHECK_THROWS_AS(Segment(ToolResponse{}, Origin::ModelGenerated), std::invalid_argument);
  CHECK_THROWS_AS(Segment(Classification{Mode::Instant, ""}, Origin::Observation), std::invalid_argument);
  CHECK_THROWS_AS(Segment(Answer{"x"}, Origin::InjectedPrefix), std::invalid_argument);
  CHECK_NOTHROW(Segment(Classification{Mode::Instant, ""}, Origin::InjectedPrefix));
}

TEST_CASE("loss mask follows token origins") {
  SUBCASE("forced classification is excluded, the answer included") {
    Trajectory t = instant_answer("Paris", true);
    LossMask mask = loss_mask(t);
    for (std::size_t i = 0; i < t.tokens().size(); ++i) {
      const bool in_answer = t.segments()[t.tokens()[i].segment].kind() == SegmentKind::Answer;
      CHECK(mask.included[i] == in_answer);
    }
    CHECK(mask.included_count() == 3);
  }
  SUBCASE("self-chosen classification is included") {
    LossMask mask = loss_mask(instant_answer("Paris"));
    CHECK(mask.included_count() == mask.size());
  }
  SUBCASE("agentic count equals total minus observation and injected tokens") {
    Trajectory t = two_call_agentic();
    std::size_t observed = 0;
    for (const auto& seg : t.segments())
      if (seg.kind() == SegmentKind::ToolResponse) observed += split_symbols(serialize_segment(seg)).size();
    CHECK(loss_mask(t).included_count() == t.tokens().size() - observed);
  }
  SUBCASE("no model token at all") {
    Trajectory t("q", {Segment::classification(Mode::Instant, true)});
    CHECK_THROWS_WITH_AS(loss_mask(t), doctest::Contains("EmptyMask"), Error);
  }
}

TEST_CASE("validate_format examples") {
  SUBCASE("tool call in instant") {
    Trajectory t("q", {Segment::classification(Mode::Instant, false), Segment(ToolCall{{search("a", "x")}}),
                       Segment(ToolResponse{{make_tool_result("a", "y")}}, Origin::Observation),
                       Segment(Answer{"x"})});
    CHECK_FALSE(validate_format(t, Mode::Instant));
  }
  SUBCASE("minimal reasoning") {
    Trajectory t("q", {Segment::classification(Mode::Reasoning, false), Segment(Reasoning{"r"}), Segment(Answer{"1"})});
    CHECK(validate_format(t, Mode::Reasoning));
    CHECK_FALSE(validate_format(t, Mode::Instant));  // declared mode differs
  }
  SUBCASE("agentic without a plan") {
    auto segs = two_call_agentic().segments();
    segs.erase(segs.begin() + 1);
    CHECK_FALSE(validate_format(Trajectory("q", segs), Mode::Agentic));
  }
  SUBCASE("tool arguments must be exact") {
    CHECK(validate_format(two_call_agentic(), Mode::Agentic));
    auto segs = two_call_agentic().segments();
    segs[2] = Segment(ToolCall{{ToolInvocation{"c1", ToolName::WebSearch, {{"query", "x"}, {"k", "3"}}}}});
    CHECK_FALSE(validate_format(Trajectory("q", segs), Mode::Agentic));
    segs[2] = Segment(ToolCall{{ToolInvocation{"c1", ToolName::CodeExecute, {{"query", "1+1"}}}}});
    CHECK_FALSE(validate_format(Trajectory("q", segs), Mode::Agentic));
  }
  SUBCASE("one to ten parallel invocations") {
    auto segs = two_call_agentic().segments();
    ToolCall many;
    for (std::size_t i = 0; i < kMaxParallelToolCalls; ++i) many.invocations.push_back(search("p", "x"));
    segs[2] = Segment(many);
    CHECK(validate_format(Trajectory("q", segs), Mode::Agentic));
    many.invocations.push_back(search("p", "x"));
    segs[2] = Segment(many);
    CHECK_FALSE(validate_format(Trajectory("q", segs), Mode::Agentic));
    segs[2] = Segment(ToolCall{});
    CHECK_FALSE(validate_format(Trajectory("q", segs), Mode::Agentic));
  }
}

TEST_CASE("generated trajectories round-trip, partition their masks and pass their template") {
  auto corpus = testing::generated_corpus(PolicyParams(), 11, 40);
  REQUIRE(corpus.size() == 240);
  for (const auto& [task, g] : corpus) {
    const Trajectory& t = g.trajectory;
    CHECK(parse(serialize(t), t.query_id()) == t);
    CHECK(validate_format(t, g.mode));
    LossMask mask = loss_mask(t);
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask.included[i]) ++excluded;
      if (t.tokens()[i].origin == Origin::Observation) CHECK_FALSE(mask.included[i]);
      CHECK(mask.included[i] == (t.tokens()[i].origin == Origin::ModelGenerated));
    }
    CHECK(mask.included_count() + excluded == t.tokens().size());
  }
}

TEST_CASE("single-segment deletions and insertions break the template") {
  auto corpus = testing::generated_corpus(PolicyParams(), 12, 15);
  for (const auto& [task, g] : corpus) {
    const auto& segs = g.trajectory.segments();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      auto mutated = segs;
      mutated.erase(mutated.begin() + static_cast<std::ptrdiff_t>(i));
      bool oracle = template_oracle(kinds_of(mutated), g.mode);
      if (segs[i].kind() != SegmentKind::Summary) CHECK_FALSE(oracle);
      CHECK(validate_format(Trajectory("q", mutated), g.mode) == oracle);
    }
    for (std::size_t i = 1; i <= segs.size(); ++i) {
      for (std::size_t k = 0; k <= static_cast<std::size_t>(SegmentKind::Answer); ++k) {
        auto mutated = segs;
        mutated.insert(mutated.begin() + static_cast<std::ptrdiff_t>(i), sample_segment(static_cast<SegmentKind>(k)));
        CHECK(validate_format(Trajectory("q", mutated), g.mode) == template_oracle(kinds_of(mutated), g.mode));
      }
    }
  }
}
