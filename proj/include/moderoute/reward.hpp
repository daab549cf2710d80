#pragma once

// Reward components for one group member and the judge interface behind the
// accuracy component.

#include <memory>
#include <string>
#include <string_view>

#include "moderoute/simenv.hpp"
#include "moderoute/trajectory.hpp"

namespace moderoute {

enum class PenaltyScope : std::uint8_t { AllMembers, AdaptiveOnly };

struct RewardConfig {
  double tau = 0.5;
  double alpha = 2.0;
  PenaltyScope penalize = PenaltyScope::AllMembers;

  /// Throws InvalidConfig.
  void validate() const;
};

struct RewardBreakdown {
  double r_accuracy = 0.0;
  double r_adaptive = 1.0;
  double r_format = 0.0;
  double r_total = 0.0;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual bool correct(const Task& task, std::string_view answer) const = 0;
};

/// Exact match after trimming, lowercasing and rewriting numerals in
/// canonical rational form ("14.0" and "28/2" both read as "14").
class OracleJudge final : public Judge {
 public:
  bool correct(const Task& task, std::string_view answer) const override;
};

std::string normalize_answer(std::string_view answer);

/// Judge registered under `name` ("oracle"). Throws InvalidConfig.
std::unique_ptr<Judge> make_judge(std::string_view name);

/// 1 - p^alpha for a non-instant member on an easy query, 1 otherwise.
double adaptive_reward(const RewardConfig& cfg, Mode member_mode, bool easy, double p);

/// 1 iff the trajectory matches the template of its declared mode.
double format_reward(const Trajectory& t);

RewardBreakdown total_reward(double r_accuracy, double r_adaptive, double r_format);

/// Strictly above tau.
bool is_easy(const RewardConfig& cfg, double instant_rate);

PenaltyScope penalty_scope_from_name(std::string_view name);
std::string_view penalty_scope_name(PenaltyScope scope);

}  // namespace moderoute
