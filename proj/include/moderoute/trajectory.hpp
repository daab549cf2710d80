#pragma once

// Three-mode trajectory model and its tag-based wire format.
//
// A trajectory is an ordered list of tagged segments:
//
//   instant    <classification> <answer>
//   reasoning  <classification> <reasoning> <answer>
//   agentic    <classification> <plan> (<tool_call> <tool_response>)+ <summary>* <answer>
//
// Summaries may appear any number of times after a <tool_response>, before
// the next <tool_call> or the final <answer>. A token is one
// whitespace-delimited symbol of the serialized text; every token inherits
// the origin of the segment it was rendered from.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace moderoute {

enum class Mode : std::uint8_t { Instant = 0, Reasoning = 1, Agentic = 2 };

inline constexpr std::array<Mode, 3> kModes = {Mode::Instant, Mode::Reasoning, Mode::Agentic};
inline constexpr std::size_t kModeCount = kModes.size();

constexpr std::size_t index_of(Mode m) { return static_cast<std::size_t>(m); }

/// Classification tag string: "instant_agent", "reasoning_agent", "agentic_agent".
std::string_view mode_tag(Mode m);
std::optional<Mode> mode_from_tag(std::string_view tag);
/// Short lowercase name ("instant", ...), used in reports and config files.
std::string_view mode_name(Mode m);
std::optional<Mode> mode_from_name(std::string_view name);

/// The sentence a forced rollout injects in front of its classification tag.
std::string_view enforced_rationale(Mode m);
/// Full injected prefix for a forced rollout, exactly as serialized.
std::string enforced_prefix(Mode m);

enum class Origin : std::uint8_t { ModelGenerated, Observation, InjectedPrefix };

std::string_view origin_name(Origin o);

enum class ToolName : std::uint8_t { WebSearch, CrawlPage, CodeExecute };

std::string_view tool_name(ToolName t);
std::optional<ToolName> tool_from_name(std::string_view name);

struct ToolInvocation {
  std::string id;
  ToolName name = ToolName::WebSearch;
  std::map<std::string, std::string> arguments;

  bool operator==(const ToolInvocation&) const = default;
};

/// True iff the argument keys are exactly the ones the tool accepts:
/// web_search {query}, crawl_page {url, query}, code_execute {code}.
bool has_required_arguments(const ToolInvocation& call);

struct ToolResult {
  std::string invocation_id;
  std::string payload;
  std::size_t token_count = 0;  // symbol count of payload

  bool operator==(const ToolResult&) const = default;
};

ToolResult make_tool_result(std::string invocation_id, std::string payload);

struct Classification {
  Mode mode = Mode::Instant;
  std::string rationale;  // free text rendered before the opening tag
  bool operator==(const Classification&) const = default;
};
struct Plan {
  std::string text;
  bool operator==(const Plan&) const = default;
};
struct Reasoning {
  std::string text;
  bool operator==(const Reasoning&) const = default;
};
struct ToolCall {
  std::vector<ToolInvocation> invocations;
  bool operator==(const ToolCall&) const = default;
};
struct ToolResponse {
  std::vector<ToolResult> results;
  bool operator==(const ToolResponse&) const = default;
};
struct Summary {
  std::string text;
  bool operator==(const Summary&) const = default;
};
struct Answer {
  std::string text;
  bool operator==(const Answer&) const = default;
};

// Alternative order mirrors SegmentKind.
using SegmentBody =
    std::variant<Classification, Plan, Reasoning, ToolCall, ToolResponse, Summary, Answer>;

enum class SegmentKind : std::uint8_t {
  Classification,
  Plan,
  Reasoning,
  ToolCall,
  ToolResponse,
  Summary,
  Answer
};

std::string_view segment_tag(SegmentKind kind);

class Segment {
 public:
  /// Throws std::invalid_argument when the origin is not allowed for the
  /// kind: tool responses are always observations, only classifications can
  /// be injected.
  Segment(SegmentBody body, Origin origin = Origin::ModelGenerated);

  static Segment classification(Mode m, bool injected);

  SegmentKind kind() const { return static_cast<SegmentKind>(body_.index()); }
  Origin origin() const { return origin_; }
  const SegmentBody& body() const { return body_; }

  template <typename T>
  const T& as() const {
    return std::get<T>(body_);
  }

  bool operator==(const Segment&) const = default;

 private:
  SegmentBody body_;
  Origin origin_;
};

struct Token {
  std::string symbol;
  Origin origin = Origin::ModelGenerated;
  std::size_t segment = 0;  // index into Trajectory::segments()

  bool operator==(const Token&) const = default;
};

/// Immutable after construction; tokens are derived from the segments.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::string query_id, std::vector<Segment> segments);

  const std::string& query_id() const { return query_id_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Token>& tokens() const { return tokens_; }

  /// Mode named by the leading classification segment, if there is one.
  std::optional<Mode> declared_mode() const;
  /// Text of the final answer segment, empty when absent.
  std::string_view answer() const;

  bool operator==(const Trajectory& other) const {
    return query_id_ == other.query_id_ && segments_ == other.segments_;
  }

 private:
  std::string query_id_;
  std::vector<Segment> segments_;
  std::vector<Token> tokens_;
};

/// Whitespace-delimited symbols of `text`.
std::vector<std::string> split_symbols(std::string_view text);
std::size_t count_symbols(std::string_view text);

std::string serialize_segment(const Segment& segment);
std::string serialize(const Trajectory& t);

/// Strict inverse of serialize. Throws Error with MalformedTag,
/// OrderViolation or UnknownMode.
Trajectory parse(std::string_view text, std::string query_id = {});

struct LossMask {
  std::vector<bool> included;

  std::size_t included_count() const;
  std::size_t size() const { return included.size(); }
};

/// Includes exactly the model-generated tokens. Throws EmptyMask when none.
LossMask loss_mask(const Trajectory& t);

/// True iff the segment kinds follow the template of `m`.
bool matches_template(std::span<const SegmentKind> kinds, Mode m);

/// Template match for `m`, declared mode equal to `m`, 1 to 10 invocations
/// per tool call, and exact tool argument sets.
bool validate_format(const Trajectory& t, Mode m);

inline constexpr std::size_t kMaxParallelToolCalls = 10;

}  // namespace moderoute
