#include "moderoute/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "moderoute/error.hpp"

namespace moderoute {

namespace {

constexpr std::string_view kCheckpointMagic = "moderoute-params v1";

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double log_sum_exp(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  return m + std::log(s);
}

double log_softmax_at(std::span<const double> logits, std::size_t i) { return logits[i] - log_sum_exp(logits); }

template <std::size_t N>
std::array<double, N> softmax(std::span<const double> logits) {
  std::array<double, N> p{};
  double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < N; ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

void add_softmax_gradient(std::span<const double> logits, std::size_t chosen, double weight, std::span<double> grad) {
  double lse = log_sum_exp(logits);
  for (std::size_t j = 0; j < logits.size(); ++j)
    grad[j] += weight * ((j == chosen ? 1.0 : 0.0) - std::exp(logits[j] - lse));
}

std::string_view relation_word(std::size_t relation) { return fact_relations()[relation].key; }

std::optional<PromptInfo> try_read_prompt(std::string_view prompt) {
  try {
    return read_prompt(prompt);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<expr::Evaluation> try_evaluate(std::string_view code) {
  try {
    return expr::evaluate(code);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Draws one token from a site's distribution and remembers its log-probability.
class Sampler {
 public:
  Sampler(const PolicyParams& params, Rng& rng) : params_(params), rng_(rng) {}

  std::size_t draw(const ScoreSite& site_template, std::span<const double> logits) {
    auto probs = softmax<PolicyParams::kVocab>(logits);
    std::size_t k = rng_.categorical(std::span<const double>(probs.data(), logits.size()));
    ScoreSite site = site_template;
    site.choice = static_cast<int>(k);
    logprobs_.push_back(site_logprob(params_, site));
    return k;
  }

  Mode draw_mode(std::size_t bucket) {
    auto row = params_.router(bucket);
    std::array<double, kModeCount> probs{};
    double lse = log_sum_exp(row);
    for (std::size_t i = 0; i < kModeCount; ++i) probs[i] = std::exp(row[i] - lse);
    std::size_t k = rng_.categorical(probs);
    ScoreSite site{ScoreSite::Kind::Route, bucket, kModes[k], 0, static_cast<int>(k)};
    logprobs_.push_back(site_logprob(params_, site));
    return kModes[k];
  }

  std::string filler(Mode m, std::size_t steps) {
    std::string out;
    for (std::size_t s = 1; s <= steps; ++s) {
      std::size_t k = draw(ScoreSite{ScoreSite::Kind::Filler, 0, m, s, -1}, params_.token_logits(m, s));
      if (!out.empty()) out += ' ';
      out += symbol_vocabulary()[k];
    }
    return out;
  }

  std::string answer(std::size_t bucket, Mode m, const std::string& derived) {
    double x = params_.quality_logit(bucket, m);
    if (rng_.uniform() < sigmoid(x)) {
      logprobs_.push_back(site_logprob(params_, ScoreSite{ScoreSite::Kind::Answer, bucket, m, 0, -1}));
      return derived;
    }
    auto probs = softmax<PolicyParams::kVocab>(params_.token_logits(m, 0));
    std::size_t k = rng_.categorical(probs);
    logprobs_.push_back(site_logprob(params_, ScoreSite{ScoreSite::Kind::Answer, bucket, m, 0, static_cast<int>(k)}));
    return std::string(symbol_vocabulary()[k]);
  }

  const std::vector<double>& logprobs() const { return logprobs_; }

 private:
  const PolicyParams& params_;
  Rng& rng_;
  std::vector<double> logprobs_;
};

std::string reasoning_derivation(const Task& task) {
  auto info = try_read_prompt(task.prompt);
  if (!info) return "recall : nothing applies\nso the answer is unresolved";
  switch (info->family) {
    case TaskFamily::Capital: {
      auto capital = recall_capital(info->subject).value_or(std::string(kUnresolvedAnswer));
      return fmt::format("recall : the capital of {} is {}\ncheck : {} is a capital city", info->subject, capital,
                         capital);
    }
    case TaskFamily::Arithmetic:
    case TaskFamily::Compute: {
      auto ev = try_evaluate(info->expression);
      if (!ev) return "the expression cannot be evaluated\nso the answer is unresolved";
      std::string out;
      for (std::size_t i = 0; i < ev->trace.size(); ++i)
        out += fmt::format("step {} : {} = {}\n", i + 1, ev->trace[i].operation, ev->trace[i].result);
      out += fmt::format("so the value is {}\ncheck : {} = {} holds", ev->value, info->expression, ev->value);
      return out;
    }
    case TaskFamily::Fact:
      return fmt::format("recall : no stored record of the {}\nso the answer is unresolved", info->subject);
  }
  return {};
}

std::string plan_goals(const Task& task) {
  auto info = try_read_prompt(task.prompt);
  if (!info) return "goal 1 : search for the question";
  switch (info->family) {
    case TaskFamily::Fact:
      return fmt::format("goal 1 : search for the {}\ngoal 2 : read the page and extract the {}", info->subject,
                         relation_word(info->relation));
    case TaskFamily::Arithmetic:
    case TaskFamily::Compute: return fmt::format("goal 1 : run {} in the sandbox", info->expression);
    case TaskFamily::Capital: return fmt::format("goal 1 : confirm the capital of {} with a search", info->subject);
  }
  return {};
}

std::optional<std::string> first_result_url(const ToolResponse& response) {
  for (const auto& r : response.results) {
    auto pos = r.payload.find("url: ");
    if (pos == std::string::npos) continue;
    pos += 5;
    auto end = r.payload.find(" |", pos);
    return r.payload.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
  }
  return std::nullopt;
}

ToolCall single_call(std::string id, ToolName name, std::map<std::string, std::string> args) {
  return ToolCall{{ToolInvocation{std::move(id), name, std::move(args)}}};
}

// Agentic body after the plan: tool rounds and summaries.
void agentic_rounds(const Environment& env, const Task& task, std::vector<Segment>& segs) {
  auto run = [&](ToolCall call) -> ToolResponse {
    ToolResponse resp = env.execute(call);
    segs.emplace_back(std::move(call));
    segs.emplace_back(resp, Origin::Observation);
    return resp;
  };
  auto info = try_read_prompt(task.prompt);
  if (info && (info->family == TaskFamily::Arithmetic || info->family == TaskFamily::Compute)) {
    auto resp = run(single_call("call-1", ToolName::CodeExecute, {{"code", info->expression}}));
    std::string got = resp.results.empty() ? std::string(kUnresolvedAnswer) : resp.results.front().payload;
    segs.emplace_back(Summary{fmt::format("sandbox returned {}", got)});
    return;
  }
  auto search = run(single_call("call-1", ToolName::WebSearch, {{"query", task.prompt}}));
  if (info && info->family == TaskFamily::Fact) {
    auto url = first_result_url(search);
    if (!url) {
      segs.emplace_back(Summary{"search found nothing to read"});
      return;
    }
    segs.emplace_back(Summary{fmt::format("top result {}", *url)});
    std::string crawl_query(fact_relations()[info->relation].crawl_query);
    run(single_call("call-2", ToolName::CrawlPage, {{"url", *url}, {"query", crawl_query}}));
    Trajectory partial(task.query_id, segs);
    segs.emplace_back(Summary{fmt::format("found {}", derive_answer(task, Mode::Agentic, &partial))});
    return;
  }
  if (info && info->family == TaskFamily::Capital) {
    segs.emplace_back(Summary{fmt::format("search adds nothing, recalled {}",
                                          recall_capital(info->subject).value_or(std::string(kUnresolvedAnswer)))});
  }
}

std::vector<std::pair<std::size_t, std::size_t>> segment_token_ranges(const Trajectory& t) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges(t.segments().size(), {0, 0});
  const auto& toks = t.tokens();
  std::size_t i = 0;
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    std::size_t begin = i;
    while (i < toks.size() && toks[i].segment == s) ++i;
    ranges[s] = {begin, i};
  }
  return ranges;
}

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorCode::VocabularyMismatch, what); }

void locate_filler(const Trajectory& t, std::size_t begin, std::string_view body, Mode m, std::size_t max_steps,
                   std::vector<std::optional<ScoreSite>>& sites) {
  auto first_line = body.substr(0, body.find('\n'));
  std::size_t n = count_symbols(first_line);
  if (n > max_steps) mismatch(fmt::format("{} filler symbols exceed {} steps", n, max_steps));
  for (std::size_t s = 1; s <= n; ++s) {
    const auto& sym = t.tokens()[begin + s].symbol;  // begin is the opening tag
    auto k = symbol_index(sym);
    if (!k) mismatch("'" + sym + "' is not in the policy vocabulary");
    sites[begin + s] = ScoreSite{ScoreSite::Kind::Filler, 0, m, s, static_cast<int>(*k)};
  }
}

}  // namespace

const std::array<std::string_view, 8>& symbol_vocabulary() {
  static constexpr std::array<std::string_view, 8> vocab = {"unknown", "maybe", "none",  "first",
                                                            "then",    "so",    "check", "hence"};
  return vocab;
}

std::optional<std::size_t> symbol_index(std::string_view symbol) {
  const auto& v = symbol_vocabulary();
  auto it = std::find(v.begin(), v.end(), symbol);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

std::size_t bucket_of(const Task& task) {
  std::size_t difficulty_band = task.difficulty < 0.5 ? 0 : 1;
  return difficulty_band * kSignalBands + prompt_signal_band(task.prompt);
}

PolicyParams::PolicyParams(double quality_logit) : data_(kSize, 0.0) {
  std::fill(data_.begin() + kRouterSize, data_.begin() + kRouterSize + kQualitySize, quality_logit);
}

PolicyParams PolicyParams::zeros() { return PolicyParams(ZeroTag{}); }

double PolicyParams::quality(std::size_t bucket, Mode m) const { return sigmoid(quality_logit(bucket, m)); }

bool PolicyParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double site_logprob(const PolicyParams& params, const ScoreSite& site) {
  const auto choice = static_cast<std::size_t>(site.choice);
  switch (site.kind) {
    case ScoreSite::Kind::Route: return log_softmax_at(params.router(site.bucket), choice);
    case ScoreSite::Kind::Filler: return log_softmax_at(params.token_logits(site.mode, site.step), choice);
    case ScoreSite::Kind::Answer: {
      double x = params.quality_logit(site.bucket, site.mode);
      if (site.choice < 0) return log_sigmoid(x);
      return log_sigmoid(-x) + log_softmax_at(params.token_logits(site.mode, 0), choice);
    }
  }
  return 0.0;
}

void add_site_gradient(const PolicyParams& params, const ScoreSite& site, double weight, PolicyParams& grad) {
  const auto choice = static_cast<std::size_t>(site.choice);
  switch (site.kind) {
    case ScoreSite::Kind::Route:
      add_softmax_gradient(params.router(site.bucket), choice, weight, grad.router(site.bucket));
      return;
    case ScoreSite::Kind::Filler:
      add_softmax_gradient(params.token_logits(site.mode, site.step), choice, weight,
                           grad.token_logits(site.mode, site.step));
      return;
    case ScoreSite::Kind::Answer: {
      double x = params.quality_logit(site.bucket, site.mode);
      if (site.choice < 0) {
        grad.quality_logit(site.bucket, site.mode) += weight * sigmoid(-x);
      } else {
        grad.quality_logit(site.bucket, site.mode) -= weight * sigmoid(x);
        add_softmax_gradient(params.token_logits(site.mode, 0), choice, weight, grad.token_logits(site.mode, 0));
      }
      return;
    }
  }
}

std::vector<std::size_t> site_dependencies(const ScoreSite& site) {
  std::vector<std::size_t> out;
  auto add_row = [&](std::size_t offset, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(offset + i);
  };
  switch (site.kind) {
    case ScoreSite::Kind::Route: add_row(PolicyParams::router_offset(site.bucket), kModeCount); break;
    case ScoreSite::Kind::Filler:
      add_row(PolicyParams::token_offset(site.mode, site.step), PolicyParams::kVocab);
      break;
    case ScoreSite::Kind::Answer:
      out.push_back(PolicyParams::quality_offset(site.bucket, site.mode));
      if (site.choice >= 0) add_row(PolicyParams::token_offset(site.mode, 0), PolicyParams::kVocab);
      break;
  }
  return out;
}

RouteDecision route(const PolicyParams& params, const Task& task, Rng& rng) {
  Sampler sampler(params, rng);
  Mode m = sampler.draw_mode(bucket_of(task));
  return {m, sampler.logprobs().front()};
}

std::string derive_answer(const Task& task, Mode m, const Trajectory* t) {
  auto info = try_read_prompt(task.prompt);
  if (!info) return std::string(kUnresolvedAnswer);
  if (info->family == TaskFamily::Capital)
    return recall_capital(info->subject).value_or(std::string(kUnresolvedAnswer));
  bool computes = info->family == TaskFamily::Arithmetic || info->family == TaskFamily::Compute;
  switch (m) {
    case Mode::Instant:
      if (info->family != TaskFamily::Arithmetic) return std::string(kUnresolvedAnswer);
      [[fallthrough]];
    case Mode::Reasoning: {
      if (!computes) return std::string(kUnresolvedAnswer);
      auto ev = try_evaluate(info->expression);
      return ev ? ev->value : std::string(kUnresolvedAnswer);
    }
    case Mode::Agentic: break;
  }
  if (t == nullptr) return std::string(kUnresolvedAnswer);
  std::map<std::string, ToolName> called;
  for (const auto& seg : t->segments()) {
    if (seg.kind() == SegmentKind::ToolCall) {
      for (const auto& inv : seg.as<ToolCall>().invocations) called[inv.id] = inv.name;
      continue;
    }
    if (seg.kind() != SegmentKind::ToolResponse) continue;
    for (const auto& r : seg.as<ToolResponse>().results) {
      auto it = called.find(r.invocation_id);
      if (it == called.end() || r.payload.starts_with("Error:")) continue;
      if (computes && it->second == ToolName::CodeExecute) return r.payload;
      if (info->family == TaskFamily::Fact && it->second == ToolName::CrawlPage) {
        if (auto fact = extract_fact(r.payload, fact_relations()[info->relation].phrase)) return *fact;
      }
    }
  }
  return std::string(kUnresolvedAnswer);
}

Generation generate(const PolicyParams& params, const Environment& env, const Task& task, Mode mode, bool forced,
                    Rng& rng) {
  Sampler sampler(params, rng);
  const std::size_t bucket = bucket_of(task);
  std::vector<Segment> segs;
  if (forced) {
    segs.push_back(Segment::classification(mode, true));
  } else {
    mode = sampler.draw_mode(bucket);
    segs.push_back(Segment::classification(mode, false));
  }
  switch (mode) {
    case Mode::Instant: break;
    case Mode::Reasoning:
      segs.emplace_back(Reasoning{sampler.filler(Mode::Reasoning, kReasoningFillerSteps) + "\n" +
                                  reasoning_derivation(task)});
      break;
    case Mode::Agentic:
      segs.emplace_back(Plan{sampler.filler(Mode::Agentic, kPlanFillerSteps) + "\n" + plan_goals(task)});
      agentic_rounds(env, task, segs);
      break;
  }
  std::string derived;
  if (mode == Mode::Agentic) {
    Trajectory partial(task.query_id, segs);
    derived = derive_answer(task, mode, &partial);
  } else {
    derived = derive_answer(task, mode, nullptr);
  }
  segs.emplace_back(Answer{sampler.answer(bucket, mode, derived)});

  Generation g;
  g.trajectory = Trajectory(task.query_id, std::move(segs));
  g.mode = mode;
  g.forced = forced;
  g.bucket = bucket;
  g.sites = locate_sites(task, g.trajectory);

  const auto& drawn = sampler.logprobs();
  std::size_t next = 0;
  g.tokens.reserve(g.trajectory.tokens().size());
  for (std::size_t i = 0; i < g.trajectory.tokens().size(); ++i) {
    const auto& tok = g.trajectory.tokens()[i];
    SampledToken st{tok.symbol, std::nullopt, tok.origin};
    if (tok.origin == Origin::ModelGenerated) st.logprob = g.sites[i] ? drawn.at(next++) : 0.0;
    g.tokens.push_back(std::move(st));
  }
  if (next != drawn.size()) throw std::logic_error("sampled tokens do not line up with located sites");
  return g;
}

Generation generate_adaptive(const PolicyParams& params, const Environment& env, const Task& task, Rng& rng) {
  return generate(params, env, task, Mode::Instant, false, rng);
}

std::vector<std::optional<ScoreSite>> locate_sites(const Task& task, const Trajectory& t) {
  std::vector<std::optional<ScoreSite>> sites(t.tokens().size());
  auto mode = t.declared_mode();
  if (!mode) mismatch("trajectory has no classification");
  const std::size_t bucket = bucket_of(task);
  auto ranges = segment_token_ranges(t);
  for (std::size_t s = 0; s < t.segments().size(); ++s) {
    const Segment& seg = t.segments()[s];
    auto [begin, end] = ranges[s];
    switch (seg.kind()) {
      case SegmentKind::Classification: {
        for (std::size_t i = begin; i + 1 < end; ++i) {
          if (t.tokens()[i].symbol != "<classification>") continue;
          auto m = mode_from_tag(t.tokens()[i + 1].symbol);
          if (m) sites[i + 1] = ScoreSite{ScoreSite::Kind::Route, bucket, *m, 0, static_cast<int>(index_of(*m))};
          break;
        }
        break;
      }
      case SegmentKind::Reasoning:
        locate_filler(t, begin, seg.as<Reasoning>().text, Mode::Reasoning, kReasoningFillerSteps, sites);
        break;
      case SegmentKind::Plan:
        locate_filler(t, begin, seg.as<Plan>().text, Mode::Agentic, kPlanFillerSteps, sites);
        break;
      case SegmentKind::Answer: {
        if (end - begin != 3) mismatch("answer must be a single symbol");
        const auto& sym = t.tokens()[begin + 1].symbol;
        if (sym == derive_answer(task, *mode, &t)) {
          sites[begin + 1] = ScoreSite{ScoreSite::Kind::Answer, bucket, *mode, 0, -1};
        } else if (auto k = symbol_index(sym)) {
          sites[begin + 1] = ScoreSite{ScoreSite::Kind::Answer, bucket, *mode, 0, static_cast<int>(*k)};
        } else {
          mismatch("answer '" + sym + "' is neither the derived answer nor a vocabulary symbol");
        }
        break;
      }
      default: break;
    }
  }
  return sites;
}

std::vector<std::optional<double>> logprob_under(const PolicyParams& params, const Task& task, const Trajectory& t) {
  auto sites = locate_sites(task, t);
  std::vector<std::optional<double>> out(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (t.tokens()[i].origin != Origin::ModelGenerated) continue;
    out[i] = sites[i] ? site_logprob(params, *sites[i]) : 0.0;
  }
  return out;
}

double evaluate_objective(const PolicyParams& params, std::span<const ScoreSite> sites,
                          const LogprobObjective& objective) {
  std::vector<double> lp(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) lp[i] = site_logprob(params, sites[i]);
  return objective(lp).value;
}

PolicyParams gradient(const PolicyParams& params, std::span<const ScoreSite> sites,
                      const LogprobObjective& objective) {
  std::vector<double> lp(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) lp[i] = site_logprob(params, sites[i]);
  ObjectiveValue ov = objective(lp);
  if (ov.d_logprob.size() != sites.size())
    throw std::invalid_argument("objective returned partials of the wrong length");
  PolicyParams grad = PolicyParams::zeros();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (ov.d_logprob[i] != 0.0) add_site_gradient(params, sites[i], ov.d_logprob[i], grad);
  }
  if (!std::isfinite(ov.value) || !grad.all_finite())
    throw Error(ErrorCode::NonFiniteGradient, "objective or gradient is not finite");
  return grad;
}

void write_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  auto flat = params.flat();
  auto block = [&](std::string_view name, std::string_view shape, std::size_t offset, std::size_t count,
                   std::size_t row) {
    out << name << ' ' << shape << '\n';
    for (std::size_t i = 0; i < count; ++i)
      out << fmt::format("{:.17g}", flat[offset + i]) << ((i + 1) % row == 0 ? '\n' : ' ');
  };
  out << kCheckpointMagic << '\n';
  block("router_logits", fmt::format("{} {}", kBuckets, kModeCount), 0, PolicyParams::kRouterSize, kModeCount);
  block("mode_quality_logits", fmt::format("{} {}", kBuckets, kModeCount), PolicyParams::kRouterSize,
        PolicyParams::kQualitySize, kModeCount);
  block("token_logits", fmt::format("{} {} {}", kModeCount, kTokenSteps, PolicyParams::kVocab),
        PolicyParams::kRouterSize + PolicyParams::kQualitySize, PolicyParams::kTokenSize, PolicyParams::kVocab);
}

PolicyParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw Error(ErrorCode::Io, "'" + path.string() + "' is not a moderoute checkpoint");
  PolicyParams params = PolicyParams::zeros();
  auto flat = params.flat();
  std::size_t offset = 0;
  const std::array<std::pair<std::string_view, std::vector<std::size_t>>, 3> blocks = {{
      {"router_logits", {kBuckets, kModeCount}},
      {"mode_quality_logits", {kBuckets, kModeCount}},
      {"token_logits", {kModeCount, kTokenSteps, PolicyParams::kVocab}},
  }};
  for (const auto& [name, shape] : blocks) {
    if (!std::getline(in, line)) throw Error(ErrorCode::Io, "checkpoint truncated before " + std::string(name));
    std::istringstream header(line);
    std::string got;
    header >> got;
    std::vector<std::size_t> dims;
    for (std::size_t d; header >> d;) dims.push_back(d);
    if (got != name || dims != shape)
      throw Error(ErrorCode::Io, "checkpoint block '" + got + "' does not match expected " + std::string(name));
    std::size_t count = 1;
    for (auto d : dims) count *= d;
    for (std::size_t i = 0; i < count; ++i) {
      std::string tok;
      if (!(in >> tok)) throw Error(ErrorCode::Io, "checkpoint truncated in " + std::string(name));
      char* endp = nullptr;
      double v = std::strtod(tok.c_str(), &endp);
      if (endp != tok.c_str() + tok.size()) throw Error(ErrorCode::Io, "bad number '" + tok + "' in checkpoint");
      flat[offset++] = v;
    }
    std::getline(in, line);  // rest of the last row
  }
  return params;
}

}  // namespace moderoute
