#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "moderoute/error.hpp"
#include "moderoute/metrics.hpp"
#include "moderoute/rng.hpp"

using namespace moderoute;

namespace {

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += i ? " w" : "w";
  return s;
}

}  // namespace

TEST_CASE("pricing examples") {
  PricingTable paper;
  CHECK(token_cost({1000, 0}, paper) == 0.00028);
  CHECK(token_cost({0, 1000}, paper) == 0.00084);
  CHECK(token_cost({1000, 2000}, paper) == 0.00196);
}

TEST_CASE("trajectory cost bills origins") {
  PricingTable paper;
  // 5 tag tokens + 995 answer words = 1000 model tokens.
  Trajectory t("q", {Segment::classification(Mode::Instant, false), Segment(Answer{words(995)})});
  CHECK(count_tokens(t, paper).output == 1000);
  CHECK(trajectory_cost(t, paper) == 0.00084);
  CHECK(trajectory_cost(t, paper, 1000) == 0.00028 + 0.00084);

  Trajectory agentic("q", {Segment::classification(Mode::Agentic, true), Segment(Plan{"p"}),
                           Segment(ToolCall{{ToolInvocation{"a", ToolName::WebSearch, {{"query", "x"}}}}}),
                           Segment(ToolResponse{{make_tool_result("a", words(40))}}, Origin::Observation),
                           Segment(Answer{"x"})});
  TokenCounts as_input = count_tokens(agentic, paper);
  PricingTable obs_out = paper;
  obs_out.observations_as_input = false;
  TokenCounts as_output = count_tokens(agentic, obs_out);
  CHECK(as_input.input + as_input.output == agentic.tokens().size());
  std::size_t observed = 0, injected = 0;
  for (const auto& tok : agentic.tokens()) {
    observed += tok.origin == Origin::Observation;
    injected += tok.origin == Origin::InjectedPrefix;
  }
  CHECK(as_input.input == observed + injected);
  CHECK(as_output.input == injected);
}

TEST_CASE("trajectory cost adds up over segments") {
  PricingTable paper;
  Trajectory t("q", {Segment::classification(Mode::Reasoning, true), Segment(Reasoning{words(70)}),
                     Segment(Answer{"x"})});
  double sum = 0.0;
  for (const auto& seg : t.segments()) sum += trajectory_cost(Trajectory("q", {seg}), paper);
  CHECK(trajectory_cost(t, paper) == doctest::Approx(sum).epsilon(1e-15));
}

TEST_CASE("cost of pass") {
  CHECK(cost_of_pass(0.00196, 0.5) == 0.00392);
  CHECK(cost_of_pass(0.00196, 1.0) == 0.00196);
  CHECK_THROWS_WITH_AS(cost_of_pass(0.00196, 0.0), doctest::Contains("ZeroAccuracy"), Error);
  double prev = INFINITY;
  for (int i = 1; i <= 10; ++i) {
    double c = cost_of_pass(1.0, i / 10.0);
    CHECK(c < prev);
    prev = c;
    CHECK(cost_of_pass(2.0, i / 10.0) > c);
  }
}

TEST_CASE("cost report") {
  std::vector<EvalRecord> records;
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    EvalRecord r;
    r.mode = kModes[rng.next() % 3];
    r.difficulty = rng.uniform();
    r.correct = r.mode != Mode::Agentic && rng.uniform() < 0.7;  // agentic never right
    r.tokens = {static_cast<std::size_t>(rng.next() % 100), static_cast<std::size_t>(rng.next() % 100)};
    r.cost = token_cost(r.tokens, PricingTable());
    records.push_back(r);
  }
  CostReport rep = cost_report(records);
  double sum = 0.0;
  for (double a : rep.allocation) sum += a;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(rep.non_instant_ratio == doctest::Approx(1.0 - rep.allocation[0]));
  CHECK_FALSE(rep.per_mode[2].cost_of_pass);
  auto j = nlohmann::json::parse(cost_report_json(rep));
  CHECK(j["modes"]["agentic"]["cost_of_pass"] == "inf");
  CHECK(j["overall"]["queries"] == 300);
  CHECK(cost_report_csv(rep).find("agentic,") != std::string::npos);
  CHECK_THROWS_WITH_AS(cost_report({}), doctest::Contains("EmptyResult"), Error);

  SUBCASE("allocation by difficulty matches a recount") {
    auto bands = allocation_by_difficulty(records);
    REQUIRE(bands.size() == 5);
    for (std::size_t b = 0; b < 5; ++b) {
      std::array<std::size_t, 3> c{};
      std::size_t n = 0;
      for (const auto& r : records) {
        double lo = b / 5.0, hi = (b + 1) / 5.0;
        if (r.difficulty >= lo && (r.difficulty < hi || (b == 4 && r.difficulty <= 1.0))) {
          ++n;
          ++c[index_of(r.mode)];
        }
      }
      CHECK(bands[b].count == n);
      double s = 0.0;
      for (std::size_t m = 0; m < 3; ++m) {
        CHECK(bands[b].fractions[m] == doctest::Approx(static_cast<double>(c[m]) / n));
        s += bands[b].fractions[m];
      }
      CHECK(s == doctest::Approx(1.0));
    }
  }
  SUBCASE("all-instant results") {
    for (auto& r : records) r.mode = Mode::Instant;
    for (const auto& b : allocation_by_difficulty(records, 7))
      if (b.count) CHECK(b.fractions[0] == 1.0);
  }
}
