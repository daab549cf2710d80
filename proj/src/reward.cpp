#include "moderoute/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include "moderoute/error.hpp"
#include "moderoute/expression.hpp"

namespace moderoute {

void RewardConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in [0, 1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidConfig, "alpha must be positive");
}

std::string normalize_answer(std::string_view answer) {
  auto begin = answer.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = answer.find_last_not_of(" \t\r\n");
  std::string s(answer.substr(begin, end - begin + 1));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::regex numeral(R"(-?[0-9]+(\.[0-9]+)?(/-?[0-9]+(\.[0-9]+)?)?)");
  if (std::regex_match(s, numeral)) {
    try {
      return expr::evaluate(s).value;
    } catch (const Error&) {
      return s;  // "1/0" and friends stay literal
    }
  }
  return s;
}

bool OracleJudge::correct(const Task& task, std::string_view answer) const {
  return normalize_answer(answer) == normalize_answer(task.gold_answer);
}

std::unique_ptr<Judge> make_judge(std::string_view name) {
  if (name == "oracle") return std::make_unique<OracleJudge>();
  throw Error(ErrorCode::InvalidConfig, "unknown judge '" + std::string(name) + "'");
}

double adaptive_reward(const RewardConfig& cfg, Mode member_mode, bool easy, double p) {
  if (!easy || member_mode == Mode::Instant) return 1.0;
  return 1.0 - std::pow(p, cfg.alpha);
}

double format_reward(const Trajectory& t) {
  auto m = t.declared_mode();
  return m && validate_format(t, *m) ? 1.0 : 0.0;
}

RewardBreakdown total_reward(double r_accuracy, double r_adaptive, double r_format) {
  return {r_accuracy, r_adaptive, r_format, r_accuracy * r_adaptive * r_format};
}

bool is_easy(const RewardConfig& cfg, double instant_rate) { return instant_rate > cfg.tau; }

PenaltyScope penalty_scope_from_name(std::string_view name) {
  if (name == "all_members") return PenaltyScope::AllMembers;
  if (name == "adaptive_only") return PenaltyScope::AdaptiveOnly;
  throw Error(ErrorCode::InvalidConfig, "penalize must be all_members or adaptive_only, got '" + std::string(name) + "'");
}

std::string_view penalty_scope_name(PenaltyScope scope) {
  return scope == PenaltyScope::AllMembers ? "all_members" : "adaptive_only";
}

}  // namespace moderoute
