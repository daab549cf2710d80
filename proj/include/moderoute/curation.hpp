#pragma once

// Difficulty probing, J-shape reshaping of the easiness histogram and mode
// labels for queries several modes can solve.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "moderoute/policy.hpp"
#include "moderoute/reward.hpp"

namespace moderoute {

struct EasinessProfile {
  std::string query_id;
  std::size_t solved = 0;
  std::size_t probes = 1;

  double easiness() const { return static_cast<double>(solved) / static_cast<double>(probes); }
  bool operator==(const EasinessProfile&) const = default;
};

inline constexpr double kDefaultKeepRatio = 0.25;

/// Probe i of a task draws from stream_seed(seed, "probe:" + query_id, i) and
/// runs forced in the task's gold mode. Throws InvalidConfig for n_probes = 0.
std::vector<EasinessProfile> probe_easiness(const PolicyParams& params, const Environment& env,
                                            std::span<const Task> tasks, std::size_t n_probes, const Judge& judge,
                                            std::uint64_t seed, std::size_t workers = 1);

/// Keeps round(keep_ratio * count) always-solved profiles, chosen by a seeded
/// permutation, and every other profile; input order is preserved. Throws
/// InvalidConfig for keep_ratio outside (0, 1] and EmptyResult when nothing
/// survives.
std::vector<EasinessProfile> reshape_to_j(std::span<const EasinessProfile> profiles, double keep_ratio,
                                          std::uint64_t seed);

/// Count per solved count 0..probes. Profiles must share one probe count.
std::vector<std::size_t> easiness_histogram(std::span<const EasinessProfile> profiles);
/// "bin,count" rows with bins written as k/n.
std::string histogram_csv(std::span<const EasinessProfile> profiles);

/// Tasks whose query_id appears in `profiles`, in profile order.
std::vector<Task> select_tasks(std::span<const Task> tasks, std::span<const EasinessProfile> profiles);

/// Highest accuracy wins; ties go to the cheaper mode. Unprobed modes are
/// empty. Throws EmptyResult when no mode was probed.
Mode resolve_ambiguous_label(const std::array<std::optional<double>, kModeCount>& accuracies);

}  // namespace moderoute
