#pragma once

// Group rollouts: rho prefix-injected members per mode followed by gamma
// adaptive members, all drawn from one parameter snapshot.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "moderoute/policy.hpp"
#include "moderoute/reward.hpp"

namespace moderoute {

/// Which forced members define p in the adaptive reward.
enum class SuccessScope : std::uint8_t { AllForced, ChosenMode };

SuccessScope success_scope_from_name(std::string_view name);
std::string_view success_scope_name(SuccessScope scope);

struct RolloutConfig {
  std::size_t rho = 3;
  std::size_t gamma = 3;
  std::uint64_t seed = 0;

  std::size_t group_size() const { return kModeCount * rho + gamma; }
  /// Throws InvalidConfig unless the group has at least two members.
  void validate() const;
};

struct RolloutGroup {
  Task task;
  /// Forced instant, reasoning and agentic members (rho each) then the
  /// adaptive ones.
  std::vector<Generation> members;

  std::size_t size() const { return members.size(); }
  std::size_t count_forced(Mode m) const;
  std::size_t count_adaptive() const;
};

/// Member i draws from stream_seed(cfg.seed, task.query_id, i).
RolloutGroup run_group(const RolloutConfig& cfg, const PolicyParams& params, const Environment& env,
                       const Task& task);

std::vector<bool> judge_members(const RolloutGroup& g, const Judge& judge);

/// Share of judge-correct forced members. Throws NoForcedMembers.
double forced_success_rate(const RolloutGroup& g, const Judge& judge);
double forced_success_rate(const RolloutGroup& g, const std::vector<bool>& verdicts);
/// Same, restricted to members forced into `m`.
double mode_success_rate(const RolloutGroup& g, const std::vector<bool>& verdicts, Mode m);
double instant_success_rate(const RolloutGroup& g, const Judge& judge);

/// One JSON record per member: query_id, kind, mode, correct, text.
void write_rollout_dump(std::ostream& out, const RolloutGroup& g, const std::vector<bool>& verdicts);

}  // namespace moderoute
