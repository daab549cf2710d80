#include "moderoute/trajectory.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "json.hpp"

#include "moderoute/error.hpp"

namespace moderoute {

namespace {

constexpr std::array<std::string_view, 7> kSegmentTags = {
    "classification", "plan", "reasoning", "tool_call", "tool_response", "summary", "answer"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool all_space(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

std::optional<SegmentKind> kind_from_tag(std::string_view tag) {
  for (std::size_t i = 0; i < kSegmentTags.size(); ++i)
    if (kSegmentTags[i] == tag) return static_cast<SegmentKind>(i);
  return std::nullopt;
}

std::string wrap(std::string_view tag, std::string_view body) {
  std::string out;
  out.reserve(body.size() + 2 * tag.size() + 8);
  out += '<';
  out += tag;
  out += ">\n";
  if (!body.empty()) {
    out += body;
    out += '\n';
  }
  out += "</";
  out += tag;
  out += '>';
  return out;
}

std::string render_calls(const ToolCall& call) {
  std::string out;
  for (const auto& inv : call.invocations) {
    nlohmann::json j;
    j["id"] = inv.id;
    j["name"] = std::string(tool_name(inv.name));
    j["arguments"] = inv.arguments;
    if (!out.empty()) out += '\n';
    out += j.dump();
  }
  return out;
}

std::string render_results(const ToolResponse& response) {
  std::string out;
  for (const auto& res : response.results) {
    nlohmann::json j;
    j["id"] = res.invocation_id;
    j["payload"] = res.payload;
    if (!out.empty()) out += '\n';
    out += j.dump();
  }
  return out;
}

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedTag, what); }

std::vector<nlohmann::json> json_lines(std::string_view body, std::string_view tag) {
  std::vector<nlohmann::json> out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    auto line = trim(body.substr(pos, end - pos));
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded() || !j.is_object())
        malformed("<" + std::string(tag) + "> body line is not a JSON object");
      out.push_back(std::move(j));
    }
    pos = end + 1;
  }
  return out;
}

ToolCall parse_calls(std::string_view body) {
  ToolCall call;
  for (auto& j : json_lines(body, "tool_call")) {
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("name") || !j["name"].is_string() ||
        !j.contains("arguments") || !j["arguments"].is_object())
      malformed("tool invocation needs string id, string name and object arguments");
    auto name = tool_from_name(j["name"].get<std::string>());
    if (!name) malformed("unknown tool '" + j["name"].get<std::string>() + "'");
    ToolInvocation inv;
    inv.id = j["id"].get<std::string>();
    inv.name = *name;
    for (auto& [key, value] : j["arguments"].items()) {
      if (!value.is_string()) malformed("tool argument '" + key + "' is not a string");
      inv.arguments.emplace(key, value.get<std::string>());
    }
    call.invocations.push_back(std::move(inv));
  }
  return call;
}

ToolResponse parse_results(std::string_view body) {
  ToolResponse response;
  for (auto& j : json_lines(body, "tool_response")) {
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("payload") || !j["payload"].is_string())
      malformed("tool result needs string id and string payload");
    response.results.push_back(make_tool_result(j["id"].get<std::string>(), j["payload"].get<std::string>()));
  }
  return response;
}

struct TagEvent {
  bool closing = false;
  SegmentKind kind = SegmentKind::Answer;
  std::size_t begin = 0;  // position of '<'
  std::size_t end = 0;    // one past '>'
};

// Anything shaped like <name> or </name> with name in [a-z_]+ is a tag.
std::vector<TagEvent> scan_tags(std::string_view text) {
  std::vector<TagEvent> events;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string_view::npos) {
    std::size_t i = pos + 1;
    bool closing = i < text.size() && text[i] == '/';
    if (closing) ++i;
    std::size_t name_begin = i;
    while (i < text.size() && (std::islower(static_cast<unsigned char>(text[i])) || text[i] == '_')) ++i;
    if (i == name_begin || i >= text.size() || text[i] != '>') {
      ++pos;
      continue;
    }
    auto name = text.substr(name_begin, i - name_begin);
    auto kind = kind_from_tag(name);
    if (!kind) malformed("unknown tag <" + std::string(name) + ">");
    events.push_back({closing, *kind, pos, i + 1});
    pos = i + 1;
  }
  return events;
}

}  // namespace

std::string_view mode_tag(Mode m) {
  switch (m) {
    case Mode::Instant: return "instant_agent";
    case Mode::Reasoning: return "reasoning_agent";
    case Mode::Agentic: return "agentic_agent";
  }
  return "";
}

std::optional<Mode> mode_from_tag(std::string_view tag) {
  for (Mode m : kModes)
    if (mode_tag(m) == tag) return m;
  return std::nullopt;
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Instant: return "instant";
    case Mode::Reasoning: return "reasoning";
    case Mode::Agentic: return "agentic";
  }
  return "";
}

std::optional<Mode> mode_from_name(std::string_view name) {
  for (Mode m : kModes)
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

std::string_view enforced_rationale(Mode m) {
  switch (m) {
    case Mode::Reasoning:
      return "This task requires complex logical reasoning (such as mathematical proofs, multi-step "
             "problem solving) and causal analysis, so I will select reasoning_agent.";
    case Mode::Agentic:
      return "This task requires acquiring real-world information (such as news and data) or "
             "executing code (such as programming problems, data processing, or statistics), so I "
             "will select agentic_agent.";
    case Mode::Instant:
      return "This task needs no real-world info, code, or complex reasoning—just basic knowledge "
             "or brief responses, so I will select instant_agent.";
  }
  return "";
}

std::string enforced_prefix(Mode m) { return serialize_segment(Segment::classification(m, true)); }

std::string_view origin_name(Origin o) {
  switch (o) {
    case Origin::ModelGenerated: return "model";
    case Origin::Observation: return "observation";
    case Origin::InjectedPrefix: return "injected";
  }
  return "";
}

std::string_view tool_name(ToolName t) {
  switch (t) {
    case ToolName::WebSearch: return "web_search";
    case ToolName::CrawlPage: return "crawl_page";
    case ToolName::CodeExecute: return "code_execute";
  }
  return "";
}

std::optional<ToolName> tool_from_name(std::string_view name) {
  for (auto t : {ToolName::WebSearch, ToolName::CrawlPage, ToolName::CodeExecute})
    if (tool_name(t) == name) return t;
  return std::nullopt;
}

bool has_required_arguments(const ToolInvocation& call) {
  auto keys_are = [&](std::initializer_list<std::string_view> keys) {
    if (call.arguments.size() != keys.size()) return false;
    return std::all_of(keys.begin(), keys.end(),
                       [&](std::string_view k) { return call.arguments.count(std::string(k)) == 1; });
  };
  switch (call.name) {
    case ToolName::WebSearch: return keys_are({"query"});
    case ToolName::CrawlPage: return keys_are({"url", "query"});
    case ToolName::CodeExecute: return keys_are({"code"});
  }
  return false;
}

ToolResult make_tool_result(std::string invocation_id, std::string payload) {
  ToolResult r;
  r.token_count = count_symbols(payload);
  r.invocation_id = std::move(invocation_id);
  r.payload = std::move(payload);
  return r;
}

std::string_view segment_tag(SegmentKind kind) { return kSegmentTags[static_cast<std::size_t>(kind)]; }

Segment::Segment(SegmentBody body, Origin origin) : body_(std::move(body)), origin_(origin) {
  switch (kind()) {
    case SegmentKind::ToolResponse:
      if (origin_ != Origin::Observation) throw std::invalid_argument("tool responses are observations");
      break;
    case SegmentKind::Classification:
      if (origin_ == Origin::Observation)
        throw std::invalid_argument("classification cannot be an observation");
      break;
    default:
      if (origin_ != Origin::ModelGenerated)
        throw std::invalid_argument(std::string(segment_tag(kind())) + " must be model-generated");
  }
}

Segment Segment::classification(Mode m, bool injected) {
  Classification c{m, injected ? std::string(enforced_rationale(m)) : std::string()};
  return Segment(std::move(c), injected ? Origin::InjectedPrefix : Origin::ModelGenerated);
}

Trajectory::Trajectory(std::string query_id, std::vector<Segment> segments)
    : query_id_(std::move(query_id)), segments_(std::move(segments)) {
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    for (auto& sym : split_symbols(serialize_segment(segments_[s])))
      tokens_.push_back({std::move(sym), segments_[s].origin(), s});
  }
}

std::optional<Mode> Trajectory::declared_mode() const {
  if (segments_.empty() || segments_.front().kind() != SegmentKind::Classification) return std::nullopt;
  return segments_.front().as<Classification>().mode;
}

std::string_view Trajectory::answer() const {
  if (segments_.empty() || segments_.back().kind() != SegmentKind::Answer) return {};
  return segments_.back().as<Answer>().text;
}

std::vector<std::string> split_symbols(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::size_t count_symbols(std::string_view text) {
  std::size_t n = 0;
  bool in_symbol = false;
  for (char c : text) {
    bool space = is_space(c);
    if (!space && !in_symbol) ++n;
    in_symbol = !space;
  }
  return n;
}

std::string serialize_segment(const Segment& segment) {
  struct Renderer {
    std::string operator()(const Classification& c) const {
      std::string out;
      if (!c.rationale.empty()) {
        out += c.rationale;
        out += '\n';
      }
      out += wrap("classification", mode_tag(c.mode));
      return out;
    }
    std::string operator()(const Plan& p) const { return wrap("plan", p.text); }
    std::string operator()(const Reasoning& r) const { return wrap("reasoning", r.text); }
    std::string operator()(const ToolCall& c) const { return wrap("tool_call", render_calls(c)); }
    std::string operator()(const ToolResponse& r) const { return wrap("tool_response", render_results(r)); }
    std::string operator()(const Summary& s) const { return wrap("summary", s.text); }
    std::string operator()(const Answer& a) const { return wrap("answer", a.text); }
  };
  return std::visit(Renderer{}, segment.body());
}

std::string serialize(const Trajectory& t) {
  std::string out;
  for (const auto& seg : t.segments()) {
    if (!out.empty()) out += '\n';
    out += serialize_segment(seg);
  }
  return out;
}

Trajectory parse(std::string_view text, std::string query_id) {
  auto events = scan_tags(text);
  if (events.empty()) malformed("no tags found");

  std::vector<Segment> segments;
  std::size_t cursor = 0;  // end of the previous closing tag
  for (std::size_t i = 0; i < events.size(); i += 2) {
    const TagEvent& open = events[i];
    if (open.closing) malformed("closing </" + std::string(segment_tag(open.kind)) + "> without opening tag");
    if (i + 1 >= events.size()) malformed("unclosed <" + std::string(segment_tag(open.kind)) + ">");
    const TagEvent& close = events[i + 1];
    if (!close.closing || close.kind != open.kind)
      malformed("<" + std::string(segment_tag(open.kind)) + "> is interleaved with another tag");

    auto gap = text.substr(cursor, open.begin - cursor);
    std::string rationale;
    if (!all_space(gap)) {
      if (i != 0 || open.kind != SegmentKind::Classification)
        malformed("stray text outside tags before <" + std::string(segment_tag(open.kind)) + ">");
      rationale = std::string(trim(gap));
    }
    auto body = trim(text.substr(open.end, close.begin - open.end));

    switch (open.kind) {
      case SegmentKind::Classification: {
        if (i != 0) throw Error(ErrorCode::OrderViolation, "classification must come first");
        auto mode = mode_from_tag(body);
        if (!mode) throw Error(ErrorCode::UnknownMode, "'" + std::string(body) + "' is not a mode tag");
        bool injected = rationale == enforced_rationale(*mode);
        segments.emplace_back(Classification{*mode, std::move(rationale)},
                              injected ? Origin::InjectedPrefix : Origin::ModelGenerated);
        break;
      }
      case SegmentKind::Plan: segments.emplace_back(Plan{std::string(body)}); break;
      case SegmentKind::Reasoning: segments.emplace_back(Reasoning{std::string(body)}); break;
      case SegmentKind::ToolCall: segments.emplace_back(parse_calls(body)); break;
      case SegmentKind::ToolResponse: segments.emplace_back(parse_results(body), Origin::Observation); break;
      case SegmentKind::Summary: segments.emplace_back(Summary{std::string(body)}); break;
      case SegmentKind::Answer: segments.emplace_back(Answer{std::string(body)}); break;
    }
    cursor = close.end;
  }
  if (!all_space(text.substr(cursor))) malformed("stray text after the last tag");

  if (segments.front().kind() != SegmentKind::Classification)
    throw Error(ErrorCode::OrderViolation, "trajectory must start with <classification>");
  std::vector<SegmentKind> kinds;
  kinds.reserve(segments.size());
  for (const auto& s : segments) kinds.push_back(s.kind());
  Mode mode = segments.front().as<Classification>().mode;
  if (!matches_template(kinds, mode))
    throw Error(ErrorCode::OrderViolation,
                "segment order does not match the " + std::string(mode_name(mode)) + " template");
  return Trajectory(std::move(query_id), std::move(segments));
}

std::size_t LossMask::included_count() const {
  return static_cast<std::size_t>(std::count(included.begin(), included.end(), true));
}

LossMask loss_mask(const Trajectory& t) {
  LossMask mask;
  mask.included.reserve(t.tokens().size());
  for (const auto& tok : t.tokens()) mask.included.push_back(tok.origin == Origin::ModelGenerated);
  if (mask.included_count() == 0)
    throw Error(ErrorCode::EmptyMask, "trajectory '" + t.query_id() + "' has no model-generated tokens");
  return mask;
}

bool matches_template(std::span<const SegmentKind> kinds, Mode m) {
  using K = SegmentKind;
  if (kinds.empty() || kinds.front() != K::Classification || kinds.back() != K::Answer) return false;
  switch (m) {
    case Mode::Instant: return kinds.size() == 2;
    case Mode::Reasoning: return kinds.size() == 3 && kinds[1] == K::Reasoning;
    case Mode::Agentic: break;
  }
  // classification plan (tool_call tool_response summary*)+ answer
  if (kinds.size() < 5 || kinds[1] != K::Plan) return false;
  std::size_t i = 2;
  bool any_round = false;
  while (i + 1 < kinds.size() && kinds[i] == K::ToolCall) {
    if (kinds[i + 1] != K::ToolResponse) return false;
    i += 2;
    while (i < kinds.size() && kinds[i] == K::Summary) ++i;
    any_round = true;
  }
  return any_round && i == kinds.size() - 1;
}

bool validate_format(const Trajectory& t, Mode m) {
  if (t.declared_mode() != m) return false;
  std::vector<SegmentKind> kinds;
  kinds.reserve(t.segments().size());
  for (const auto& s : t.segments()) kinds.push_back(s.kind());
  if (!matches_template(kinds, m)) return false;
  for (const auto& s : t.segments()) {
    if (s.kind() != SegmentKind::ToolCall) continue;
    const auto& calls = s.as<ToolCall>().invocations;
    if (calls.empty() || calls.size() > kMaxParallelToolCalls) return false;
    if (!std::all_of(calls.begin(), calls.end(), has_required_arguments)) return false;
  }
  return true;
}

}  // namespace moderoute
