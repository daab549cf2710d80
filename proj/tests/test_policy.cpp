#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "moderoute/error.hpp"
#include "moderoute/policy.hpp"
#include "moderoute/reward.hpp"
#include "support.hpp"

using namespace moderoute;
using moderoute::testing::fixture_env;
using moderoute::testing::random_params;

namespace {

// Oracles written without the library's softmax helpers.
double softmax_prob(std::span<const double> logits, std::size_t k) {
  double denom = 0.0;
  for (double x : logits) denom += std::exp(x);
  return std::exp(logits[k]) / denom;
}
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Probability of every stochastic choice in the trajectory, read off its text.
double joint_probability(const PolicyParams& p, const Task& task, const Generation& g) {
  const auto& toks = g.trajectory.tokens();
  double prob = 1.0;
  const auto& vocab = symbol_vocabulary();
  auto vocab_index = [&](const std::string& s) {
    return static_cast<std::size_t>(std::find(vocab.begin(), vocab.end(), s) - vocab.begin());
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& seg = g.trajectory.segments()[toks[i].segment];
    if (toks[i].symbol == "<classification>" && !g.forced)
      prob *= softmax_prob(p.router(bucket_of(task)), index_of(*mode_from_tag(toks[i + 1].symbol)));
    if (toks[i].symbol == "<reasoning>" || toks[i].symbol == "<plan>") {
      const std::string& text = seg.kind() == SegmentKind::Plan ? seg.as<Plan>().text : seg.as<Reasoning>().text;
      auto first_line = split_symbols(text.substr(0, text.find('\n')));
      for (std::size_t s = 0; s < first_line.size(); ++s)
        prob *= softmax_prob(p.token_logits(g.mode, s + 1), vocab_index(first_line[s]));
    }
    if (toks[i].symbol == "<answer>") {
      const std::string& ans = toks[i + 1].symbol;
      double q = logistic(p.quality_logit(bucket_of(task), g.mode));
      if (ans == derive_answer(task, g.mode, &g.trajectory)) prob *= q;
      else prob *= (1.0 - q) * softmax_prob(p.token_logits(g.mode, 0), vocab_index(ans));
    }
  }
  return prob;
}

ScoreSite random_site(Rng& rng) {
  ScoreSite s;
  s.kind = static_cast<ScoreSite::Kind>(rng.next() % 3);
  s.bucket = rng.next() % kBuckets;
  s.mode = kModes[rng.next() % kModeCount];
  switch (s.kind) {
    case ScoreSite::Kind::Route: s.choice = static_cast<int>(rng.next() % kModeCount); break;
    case ScoreSite::Kind::Filler:
      s.step = 1 + rng.next() % kReasoningFillerSteps;
      s.choice = static_cast<int>(rng.next() % PolicyParams::kVocab);
      break;
    case ScoreSite::Kind::Answer:
      s.choice = static_cast<int>(rng.next() % (PolicyParams::kVocab + 1)) - 1;
      break;
  }
  return s;
}

}  // namespace

TEST_CASE("uniform router") {
  PolicyParams p;
  Task task = testing::first_task_of(Mode::Instant);
  for (Mode m : kModes)
    CHECK(std::exp(site_logprob(p, {ScoreSite::Kind::Route, bucket_of(task), m, 0, static_cast<int>(index_of(m))})) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  std::array<std::size_t, 3> counts{};
  Rng rng(3);
  for (int i = 0; i < 30000; ++i) ++counts[index_of(route(p, task, rng).mode)];
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / 30000.0 - 1.0 / 3.0) < 0.01);
}

TEST_CASE("a dominant router logit") {
  PolicyParams p;
  Task task = testing::first_task_of(Mode::Instant);
  auto row = p.router(bucket_of(task));
  row[0] = 10.0;
  row[1] = -10.0;
  row[2] = -10.0;
  const double oracle = 1.0 / (1.0 + 2.0 * std::exp(-20.0));
  CHECK(oracle > 0.999);
  CHECK(std::exp(site_logprob(p, {ScoreSite::Kind::Route, bucket_of(task), Mode::Instant, 0, 0})) ==
        doctest::Approx(oracle).epsilon(1e-14));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    auto x = route(p, task, a);
    auto y = route(p, task, b);
    CHECK(x.mode == y.mode);
    CHECK(x.logprob == y.logprob);
  }
}

TEST_CASE("forced generation injects the classification") {
  PolicyParams p;
  for (const auto& task : testing::mixed_tasks(21, 12)) {
    for (Mode m : kModes) {
      Rng rng(stream_seed(1, task.query_id, index_of(m)));
      Generation g = generate(p, fixture_env(), task, m, true, rng);
      CHECK(g.mode == m);
      CHECK(validate_format(g.trajectory, m));
      const Segment& c = g.trajectory.segments().front();
      CHECK(c.origin() == Origin::InjectedPrefix);
      CHECK(c.as<Classification>().rationale == enforced_rationale(m));
      for (std::size_t i = 0; i < g.tokens.size(); ++i)
        if (g.tokens[i].origin != Origin::ModelGenerated) CHECK_FALSE(g.tokens[i].logprob);
    }
  }
}

TEST_CASE("answer correctness tracks mode quality") {
  OracleJudge judge;
  const auto tasks = generate_tasks(fixture_env(), 31, 40, {0, 0, 1});
  SUBCASE("quality near one") {
    PolicyParams p(40.0);
    for (const auto& task : tasks) {
      Rng rng(stream_seed(2, task.query_id));
      CHECK(judge.correct(task, generate(p, fixture_env(), task, Mode::Agentic, true, rng).trajectory.answer()));
    }
  }
  SUBCASE("Monte Carlo frequency matches the quality") {
    PolicyParams p(0.8);
    const double q = logistic(0.8);
    std::size_t hits = 0;
    const std::size_t n = 2000;
    for (std::size_t i = 0; i < n; ++i) {
      const Task& task = tasks[i % tasks.size()];
      Rng rng(stream_seed(3, task.query_id, i));
      if (judge.correct(task, generate(p, fixture_env(), task, Mode::Agentic, true, rng).trajectory.answer())) ++hits;
    }
    CHECK(std::abs(static_cast<double>(hits) / n - q) < 0.03);
  }
}

TEST_CASE("each gold mode solves its tasks and instant cannot reach beyond recall") {
  OracleJudge judge;
  PolicyParams p(40.0);
  for (const auto& task : testing::mixed_tasks(41, 90)) {
    Rng rng(stream_seed(4, task.query_id));
    CHECK(judge.correct(task, generate(p, fixture_env(), task, task.gold_mode, true, rng).trajectory.answer()));
    Rng rng2(stream_seed(5, task.query_id));
    bool instant_ok =
        judge.correct(task, generate(p, fixture_env(), task, Mode::Instant, true, rng2).trajectory.answer());
    CHECK(instant_ok == (task.gold_mode == Mode::Instant));
  }
}

TEST_CASE("per-token log-probabilities sum to the joint sampling log-probability") {
  PolicyParams p = random_params(77, 1.5);
  for (const auto& [task, g] : testing::generated_corpus(p, 13, 20)) {
    double sum = 0.0;
    for (const auto& t : g.tokens)
      if (t.logprob) sum += *t.logprob;
    CHECK(sum == doctest::Approx(std::log(joint_probability(p, task, g))).epsilon(1e-12));
  }
}

TEST_CASE("re-scoring reproduces sampling log-probabilities bitwise") {
  PolicyParams p = random_params(78, 2.0);
  for (const auto& [task, g] : testing::generated_corpus(p, 14, 20)) {
    auto rescored = logprob_under(p, task, g.trajectory);
    REQUIRE(rescored.size() == g.tokens.size());
    for (std::size_t i = 0; i < rescored.size(); ++i) {
      CHECK(rescored[i].has_value() == (g.tokens[i].origin == Origin::ModelGenerated));
      if (rescored[i]) CHECK(*rescored[i] == *g.tokens[i].logprob);
    }
  }
}

TEST_CASE("perturbing a router logit moves only the classification token") {
  PolicyParams p = random_params(79);
  for (const auto& [task, g] : testing::generated_corpus(p, 15, 10)) {
    if (g.forced) continue;
    PolicyParams q = p;
    q.router(bucket_of(task))[1] += 1e-3;
    auto before = logprob_under(p, task, g.trajectory);
    auto after = logprob_under(q, task, g.trajectory);
    for (std::size_t i = 0; i < before.size(); ++i) {
      const bool is_route = i > 0 && g.trajectory.tokens()[i - 1].symbol == "<classification>";
      if (!before[i]) continue;
      if (is_route) CHECK(*after[i] != *before[i]);
      else CHECK(*after[i] == *before[i]);
    }
  }
}

TEST_CASE("symbols outside the vocabulary are rejected") {
  Task task = testing::first_task_of(Mode::Instant);
  Trajectory t(task.query_id, {Segment::classification(Mode::Instant, false), Segment(Answer{"Zebra"})});
  CHECK_THROWS_WITH_AS(logprob_under(PolicyParams(), task, t), doctest::Contains("VocabularyMismatch"), Error);
}

TEST_CASE("analytic gradient") {
  SUBCASE("constant closure") {
    Rng rng(1);
    std::vector<ScoreSite> sites;
    for (int i = 0; i < 20; ++i) sites.push_back(random_site(rng));
    auto g = gradient(random_params(2), sites, [](std::span<const double> lp) {
      return ObjectiveValue{4.2, std::vector<double>(lp.size(), 0.0)};
    });
    CHECK(g == PolicyParams::zeros());
  }
  SUBCASE("single softmax site gives onehot minus softmax") {
    PolicyParams p = random_params(3);
    ScoreSite s{ScoreSite::Kind::Filler, 0, Mode::Reasoning, 4, 5};
    std::vector<ScoreSite> sites{s};
    auto g = gradient(p, sites, [](std::span<const double> lp) { return ObjectiveValue{lp[0], {1.0}}; });
    auto row = g.token_logits(Mode::Reasoning, 4);
    for (std::size_t k = 0; k < PolicyParams::kVocab; ++k)
      CHECK(row[k] == doctest::Approx((k == 5 ? 1.0 : 0.0) - softmax_prob(p.token_logits(Mode::Reasoning, 4), k)).epsilon(1e-14));
    double rest = 0.0;
    for (double x : g.flat()) rest += std::abs(x);
    for (double x : row) rest -= std::abs(x);
    CHECK(rest == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  }
  SUBCASE("random closures against central differences") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(stream_seed(seed, "gradient-check"));
      PolicyParams p = random_params(seed + 100, 2.0);
      std::vector<ScoreSite> sites;
      std::vector<double> c, d;
      for (int i = 0; i < 12; ++i) {
        sites.push_back(random_site(rng));
        c.push_back(2.0 * rng.uniform() - 1.0);
        d.push_back(2.0 * rng.uniform() - 1.0);
      }
      LogprobObjective f = [&](std::span<const double> lp) {
        ObjectiveValue ov{0.0, std::vector<double>(lp.size())};
        for (std::size_t k = 0; k < lp.size(); ++k) {
          ov.value += c[k] * lp[k] + d[k] * std::exp(lp[k]);
          ov.d_logprob[k] = c[k] + d[k] * std::exp(lp[k]);
        }
        return ov;
      };
      PolicyParams g = gradient(p, sites, f);
      std::set<std::size_t> deps;
      for (const auto& s : sites)
        for (auto i : site_dependencies(s)) deps.insert(i);
      double max_err = 0.0, max_ref = 0.0;
      for (std::size_t i = 0; i < PolicyParams::kSize; ++i) {
        if (!deps.count(i)) {
          CHECK(g.flat()[i] == 0.0);
          continue;
        }
        const double h = 1e-5;
        PolicyParams up = p, down = p;
        up.flat()[i] += h;
        down.flat()[i] -= h;
        double fd = (evaluate_objective(up, sites, f) - evaluate_objective(down, sites, f)) / (2 * h);
        max_err = std::max(max_err, std::abs(fd - g.flat()[i]));
        max_ref = std::max(max_ref, std::abs(fd));
      }
      CHECK(max_err / std::max(max_ref, 1e-8) < 1e-4);
    }
  }
  SUBCASE("non-finite partials are reported") {
    std::vector<ScoreSite> sites{{ScoreSite::Kind::Route, 0, Mode::Instant, 0, 0}};
    CHECK_THROWS_WITH_AS(gradient(PolicyParams(), sites,
                                  [](std::span<const double>) { return ObjectiveValue{0.0, {std::nan("")}}; }),
                         doctest::Contains("NonFiniteGradient"), Error);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  PolicyParams p = random_params(90, 7.0);
  auto path = std::filesystem::temp_directory_path() / "moderoute_params.txt";
  write_checkpoint(path, p);
  CHECK(read_checkpoint(path) == p);
  {
    std::ifstream in(path);
    std::string magic, header;
    std::getline(in, magic);
    std::getline(in, header);
    CHECK(magic == "moderoute-params v1");
    CHECK(header == "router_logits 6 3");
  }
  std::ofstream(path) << "something else\n";
  CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("Io"), Error);
  std::filesystem::remove(path);
}
