#pragma once

// Group-relative advantages, the clipped token-level surrogate and the
// on-policy training step.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "moderoute/policy.hpp"
#include "moderoute/reward.hpp"
#include "moderoute/rollout.hpp"

namespace moderoute {

struct ApoConfig {
  double clip_epsilon = 0.2;
  double learning_rate = 20.0;
  double advantage_epsilon = 1e-6;
  std::size_t steps = 200;
  std::size_t batch_size = 16;

  /// Throws InvalidConfig.
  void validate() const;
};

/// (r - mean) / (population std + eps); all zero when the rewards are equal.
/// Throws GroupTooSmall for fewer than two rewards.
std::vector<double> advantages(std::span<const double> rewards, double eps);

struct GroupScore {
  std::vector<bool> correct;
  double instant_rate = 0.0;  // 0 when the group has no forced instant member
  bool easy = false;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

GroupScore score_group(const RolloutGroup& g, const Judge& judge, const RewardConfig& reward, SuccessScope p_scope,
                       double advantage_epsilon);

/// Mask-included tokens of a batch of groups, flattened. Tokens with a
/// score site go through the ratio; deterministic model tokens have ratio 1
/// under every parameter value and are folded into `constant`.
struct SurrogateTerms {
  std::vector<ScoreSite> sites;
  std::vector<double> old_logprob;
  std::vector<double> advantage;
  std::vector<double> weight;
  double constant = 0.0;
};

/// Adds one group's tokens; each member enters with weight scale / (G * n_i).
void append_surrogate_terms(const RolloutGroup& g, std::span<const double> advantages, double scale,
                            SurrogateTerms& out);

/// min(r A, clip(r, 1-eps, 1+eps) A) per token; at a tie the unclipped branch
/// carries the derivative. Throws NonFiniteRatio.
LogprobObjective surrogate_closure(const SurrogateTerms& terms, double clip_epsilon);

double surrogate_objective(const PolicyParams& new_params, const RolloutGroup& old_group,
                           std::span<const double> advantages, const ApoConfig& cfg);
PolicyParams surrogate_gradient(const PolicyParams& new_params, const RolloutGroup& old_group,
                                std::span<const double> advantages, const ApoConfig& cfg);

struct TrainConfig {
  RolloutConfig rollout;
  RewardConfig reward;
  ApoConfig apo;
  SuccessScope p_definition = SuccessScope::AllForced;
  std::string judge = "oracle";

  void validate() const;
};

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  std::array<double, kModeCount> allocation{};  // adaptive members per chosen mode
  double accuracy = 0.0;                        // adaptive members judged correct
  double non_instant_ratio = 0.0;
  double easy_instant_allocation = 0.0;  // adaptive members choosing instant on instant-gold tasks
  double gradient_norm = 0.0;
};

struct StepResult {
  PolicyParams params;
  StepStats stats;
  std::vector<RolloutGroup> groups;
  std::vector<GroupScore> scores;
};

/// Tasks for step `step`: the first batch_size of a seeded permutation.
std::vector<Task> select_batch(std::span<const Task> tasks, std::size_t batch_size, std::uint64_t seed,
                               std::size_t step);

/// Rollouts for every task from one snapshot, scoring, then one ascent step
/// on the batch-mean surrogate. Results do not depend on `workers`.
StepResult train_step(const PolicyParams& params, const Environment& env, std::span<const Task> batch,
                      const TrainConfig& cfg, std::size_t step, std::size_t workers = 1);

struct ParetoPoint {
  double accuracy = 0.0;
  double non_instant_ratio = 0.0;
};

/// Throws EmptyResult for an empty history.
std::vector<ParetoPoint> pareto_trace(std::span<const StepStats> history);

std::string stats_csv_header();
std::string stats_csv_row(const StepStats& s);

}  // namespace moderoute
