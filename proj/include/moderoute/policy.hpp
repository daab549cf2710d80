#pragma once

// Reference toy policy standing in for the language model.
//
// Three parameter tables:
//   router logits        [bucket][mode]          softmax -> mode choice
//   mode quality logits  [bucket][mode]          logistic -> P(commit to derived answer)
//   token logits         [mode][step][symbol]    softmax -> filler / fallback symbols
//
// A bucket is (difficulty band, prompt signal band). Every stochastic token
// of a trajectory is tied to one ScoreSite naming the table row it was drawn
// from; all other model tokens are deterministic (log-probability 0).
//
// Per mode, the policy's "derived answer" is what its own work produces:
// instant knows capitals and single operations, reasoning additionally
// evaluates longer expressions, agentic reads answers out of tool results.
// The answer token is the derived answer with probability sigmoid(quality)
// and otherwise a fallback symbol from token_logits[mode][0].

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moderoute/rng.hpp"
#include "moderoute/simenv.hpp"
#include "moderoute/trajectory.hpp"

namespace moderoute {

inline constexpr std::size_t kDifficultyBands = 2;
inline constexpr std::size_t kSignalBands = 3;
inline constexpr std::size_t kBuckets = kDifficultyBands * kSignalBands;
inline constexpr std::size_t kReasoningFillerSteps = 32;
inline constexpr std::size_t kPlanFillerSteps = 8;
inline constexpr std::size_t kTokenSteps = 1 + kReasoningFillerSteps;  // step 0 is the fallback answer

/// Closed symbol vocabulary of token_logits. No symbol is ever a gold answer.
const std::array<std::string_view, 8>& symbol_vocabulary();
std::optional<std::size_t> symbol_index(std::string_view symbol);

inline constexpr std::string_view kUnresolvedAnswer = "unresolved";
inline constexpr double kDefaultQualityLogit = 3.0;

std::size_t bucket_of(const Task& task);

class PolicyParams {
 public:
  static constexpr std::size_t kRouterSize = kBuckets * kModeCount;
  static constexpr std::size_t kQualitySize = kBuckets * kModeCount;
  static constexpr std::size_t kVocab = 8;
  static constexpr std::size_t kTokenSize = kModeCount * kTokenSteps * kVocab;
  static constexpr std::size_t kSize = kRouterSize + kQualitySize + kTokenSize;

  /// Uniform router, uniform token logits, every quality logit at `quality_logit`.
  explicit PolicyParams(double quality_logit = kDefaultQualityLogit);

  static PolicyParams zeros();

  std::span<double> router(std::size_t bucket) { return {data_.data() + router_offset(bucket), kModeCount}; }
  std::span<const double> router(std::size_t bucket) const {
    return {data_.data() + router_offset(bucket), kModeCount};
  }
  double& quality_logit(std::size_t bucket, Mode m) { return data_[quality_offset(bucket, m)]; }
  double quality_logit(std::size_t bucket, Mode m) const { return data_[quality_offset(bucket, m)]; }
  /// sigmoid(quality_logit): probability of committing to the derived answer.
  double quality(std::size_t bucket, Mode m) const;
  std::span<double> token_logits(Mode m, std::size_t step) { return {data_.data() + token_offset(m, step), kVocab}; }
  std::span<const double> token_logits(Mode m, std::size_t step) const {
    return {data_.data() + token_offset(m, step), kVocab};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  static std::size_t router_offset(std::size_t bucket) { return bucket * kModeCount; }
  static std::size_t quality_offset(std::size_t bucket, Mode m) {
    return kRouterSize + bucket * kModeCount + index_of(m);
  }
  static std::size_t token_offset(Mode m, std::size_t step) {
    return kRouterSize + kQualitySize + (index_of(m) * kTokenSteps + step) * kVocab;
  }

  bool all_finite() const;
  bool operator==(const PolicyParams&) const = default;

 private:
  struct ZeroTag {};
  explicit PolicyParams(ZeroTag) : data_(kSize, 0.0) {}
  std::vector<double> data_;
};

/// Where a stochastic token was drawn from.
struct ScoreSite {
  enum class Kind : std::uint8_t { Route, Answer, Filler };
  Kind kind = Kind::Route;
  std::size_t bucket = 0;
  Mode mode = Mode::Instant;
  std::size_t step = 0;
  int choice = -1;  // Route: mode index; Filler: symbol index; Answer: -1 derived, else symbol index

  bool operator==(const ScoreSite&) const = default;
};

double site_logprob(const PolicyParams& params, const ScoreSite& site);

/// grad += weight * d site_logprob / d params.
void add_site_gradient(const PolicyParams& params, const ScoreSite& site, double weight, PolicyParams& grad);

/// Indices into PolicyParams::flat() whose value can change site_logprob.
std::vector<std::size_t> site_dependencies(const ScoreSite& site);

struct SampledToken {
  std::string symbol;
  std::optional<double> logprob;  // absent for observation and injected tokens
  Origin origin = Origin::ModelGenerated;
};

struct Generation {
  Trajectory trajectory;
  Mode mode = Mode::Instant;
  bool forced = false;
  std::size_t bucket = 0;
  /// Per token: the site it was drawn from, for every origin. Injected
  /// classification tags keep their router site so callers can check the
  /// site never reaches the loss.
  std::vector<std::optional<ScoreSite>> sites;
  /// Per token sampling-time log-probabilities (0 for deterministic model
  /// tokens, absent for observation and injected tokens).
  std::vector<SampledToken> tokens;
};

struct RouteDecision {
  Mode mode = Mode::Instant;
  double logprob = 0.0;
};

RouteDecision route(const PolicyParams& params, const Task& task, Rng& rng);

/// Template-valid trajectory for `mode`. Forced rollouts carry the injected
/// classification prefix; adaptive ones a model-generated classification.
Generation generate(const PolicyParams& params, const Environment& env, const Task& task, Mode mode, bool forced,
                    Rng& rng);

/// Route, then generate with a model-generated classification.
Generation generate_adaptive(const PolicyParams& params, const Environment& env, const Task& task, Rng& rng);

/// What the policy's own work yields for `task` in mode `m`; agentic reads
/// tool results out of `t`.
std::string derive_answer(const Task& task, Mode m, const Trajectory* t);

/// Recovers every token's site from the trajectory text. Throws
/// VocabularyMismatch for symbols the policy cannot have produced.
std::vector<std::optional<ScoreSite>> locate_sites(const Task& task, const Trajectory& t);

/// Re-scores every model-generated token under `params`; observation and
/// injected positions are left empty. Throws VocabularyMismatch.
std::vector<std::optional<double>> logprob_under(const PolicyParams& params, const Task& task, const Trajectory& t);

/// Scalar of a flat list of log-probabilities together with its partials.
struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> d_logprob;
};
using LogprobObjective = std::function<ObjectiveValue(std::span<const double> logprobs)>;

double evaluate_objective(const PolicyParams& params, std::span<const ScoreSite> sites,
                          const LogprobObjective& objective);

/// Analytic gradient of objective(site_logprob(params, sites...)) by the
/// chain rule through each site's softmax. Throws NonFiniteGradient.
PolicyParams gradient(const PolicyParams& params, std::span<const ScoreSite> sites,
                      const LogprobObjective& objective);

void write_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams read_checkpoint(const std::filesystem::path& path);

}  // namespace moderoute
