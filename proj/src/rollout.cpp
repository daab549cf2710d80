#include "moderoute/rollout.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"

#include "moderoute/error.hpp"

namespace moderoute {

SuccessScope success_scope_from_name(std::string_view name) {
  if (name == "all_forced") return SuccessScope::AllForced;
  if (name == "chosen_mode") return SuccessScope::ChosenMode;
  throw Error(ErrorCode::InvalidConfig, "p_definition must be all_forced or chosen_mode, got '" + std::string(name) + "'");
}

std::string_view success_scope_name(SuccessScope scope) {
  return scope == SuccessScope::AllForced ? "all_forced" : "chosen_mode";
}

void RolloutConfig::validate() const {
  if (group_size() < 2) throw Error(ErrorCode::InvalidConfig, "3*rho + gamma must be at least 2");
}

std::size_t RolloutGroup::count_forced(Mode m) const {
  return static_cast<std::size_t>(std::count_if(members.begin(), members.end(),
                                                [m](const Generation& g) { return g.forced && g.mode == m; }));
}

std::size_t RolloutGroup::count_adaptive() const {
  return static_cast<std::size_t>(
      std::count_if(members.begin(), members.end(), [](const Generation& g) { return !g.forced; }));
}

RolloutGroup run_group(const RolloutConfig& cfg, const PolicyParams& params, const Environment& env,
                       const Task& task) {
  cfg.validate();
  RolloutGroup g{task, {}};
  g.members.reserve(cfg.group_size());
  std::size_t index = 0;
  for (Mode m : kModes) {
    for (std::size_t r = 0; r < cfg.rho; ++r, ++index) {
      Rng rng(stream_seed(cfg.seed, task.query_id, index));
      g.members.push_back(generate(params, env, task, m, true, rng));
    }
  }
  for (std::size_t r = 0; r < cfg.gamma; ++r, ++index) {
    Rng rng(stream_seed(cfg.seed, task.query_id, index));
    g.members.push_back(generate_adaptive(params, env, task, rng));
  }
  return g;
}

std::vector<bool> judge_members(const RolloutGroup& g, const Judge& judge) {
  std::vector<bool> out;
  out.reserve(g.size());
  for (const auto& m : g.members) out.push_back(judge.correct(g.task, m.trajectory.answer()));
  return out;
}

namespace {

template <typename Pred>
double success_rate(const RolloutGroup& g, const std::vector<bool>& verdicts, Pred keep, const char* what) {
  std::size_t n = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!keep(g.members[i])) continue;
    ++n;
    if (verdicts.at(i)) ++k;
  }
  if (n == 0) throw Error(ErrorCode::NoForcedMembers, std::string("group has no ") + what + " members");
  return static_cast<double>(k) / static_cast<double>(n);
}

}  // namespace

double forced_success_rate(const RolloutGroup& g, const std::vector<bool>& verdicts) {
  return success_rate(g, verdicts, [](const Generation& m) { return m.forced; }, "forced");
}

double forced_success_rate(const RolloutGroup& g, const Judge& judge) {
  return forced_success_rate(g, judge_members(g, judge));
}

double mode_success_rate(const RolloutGroup& g, const std::vector<bool>& verdicts, Mode m) {
  return success_rate(
      g, verdicts, [m](const Generation& x) { return x.forced && x.mode == m; }, "forced");
}

double instant_success_rate(const RolloutGroup& g, const Judge& judge) {
  return mode_success_rate(g, judge_members(g, judge), Mode::Instant);
}

void write_rollout_dump(std::ostream& out, const RolloutGroup& g, const std::vector<bool>& verdicts) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& m = g.members[i];
    nlohmann::json rec = {
        {"query_id", g.task.query_id},
        {"kind", m.forced ? "forced" : "adaptive"},
        {"mode", mode_name(m.mode)},
        {"correct", static_cast<bool>(verdicts.at(i))},
        {"text", serialize(m.trajectory)},
    };
    out << rec.dump() << '\n';
  }
}

}  // namespace moderoute
