#include "moderoute/apo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "moderoute/error.hpp"
#include "moderoute/parallel.hpp"

namespace moderoute {

void ApoConfig::validate() const {
  if (!(clip_epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "clip_epsilon must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be a nonnegative number");
  if (!(advantage_epsilon >= 0.0)) throw Error(ErrorCode::InvalidConfig, "advantage_epsilon must be nonnegative");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
}

void TrainConfig::validate() const {
  rollout.validate();
  reward.validate();
  apo.validate();
  make_judge(judge);
}

std::vector<double> advantages(std::span<const double> rewards, double eps) {
  const std::size_t n = rewards.size();
  if (n < 2) throw Error(ErrorCode::GroupTooSmall, fmt::format("advantages need at least 2 rewards, got {}", n));
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double sd = std::sqrt(var / static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / (sd + eps);
  return out;
}

GroupScore score_group(const RolloutGroup& g, const Judge& judge, const RewardConfig& reward, SuccessScope p_scope,
                       double advantage_epsilon) {
  GroupScore s;
  s.correct = judge_members(g, judge);
  if (g.count_forced(Mode::Instant) > 0) {
    s.instant_rate = mode_success_rate(g, s.correct, Mode::Instant);
    s.easy = is_easy(reward, s.instant_rate);
  }
  std::vector<double> totals;
  totals.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Generation& m = g.members[i];
    double r_adaptive = 1.0;
    bool penalized = reward.penalize == PenaltyScope::AllMembers || !m.forced;
    if (s.easy && penalized && m.mode != Mode::Instant) {
      double p = p_scope == SuccessScope::AllForced ? forced_success_rate(g, s.correct)
                                                    : mode_success_rate(g, s.correct, m.mode);
      r_adaptive = adaptive_reward(reward, m.mode, s.easy, p);
    }
    s.rewards.push_back(total_reward(s.correct[i] ? 1.0 : 0.0, r_adaptive, format_reward(m.trajectory)));
    totals.push_back(s.rewards.back().r_total);
  }
  s.advantages = advantages(totals, advantage_epsilon);
  return s;
}

void append_surrogate_terms(const RolloutGroup& g, std::span<const double> adv, double scale, SurrogateTerms& out) {
  if (adv.size() != g.size()) throw std::invalid_argument("one advantage per member is required");
  const double per_member = scale / static_cast<double>(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    const Generation& m = g.members[j];
    LossMask mask = loss_mask(m.trajectory);
    const double w = per_member / static_cast<double>(mask.included_count());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask.included[i]) continue;
      if (!m.sites[i]) {
        out.constant += w * adv[j];
        continue;
      }
      out.sites.push_back(*m.sites[i]);
      out.old_logprob.push_back(*m.tokens[i].logprob);
      out.advantage.push_back(adv[j]);
      out.weight.push_back(w);
    }
  }
}

LogprobObjective surrogate_closure(const SurrogateTerms& terms, double clip_epsilon) {
  return [&terms, clip_epsilon](std::span<const double> logprobs) {
    ObjectiveValue ov{terms.constant, std::vector<double>(logprobs.size(), 0.0)};
    for (std::size_t k = 0; k < logprobs.size(); ++k) {
      double ratio = std::exp(logprobs[k] - terms.old_logprob[k]);
      if (!std::isfinite(ratio)) throw Error(ErrorCode::NonFiniteRatio, fmt::format("token ratio {}", ratio));
      const double a = terms.advantage[k];
      double unclipped = ratio * a;
      double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
      if (unclipped <= clipped) {
        ov.value += terms.weight[k] * unclipped;
        ov.d_logprob[k] = terms.weight[k] * unclipped;  // d(ratio)/d(logprob) = ratio
      } else {
        ov.value += terms.weight[k] * clipped;
      }
    }
    return ov;
  };
}

double surrogate_objective(const PolicyParams& new_params, const RolloutGroup& old_group,
                           std::span<const double> adv, const ApoConfig& cfg) {
  SurrogateTerms terms;
  append_surrogate_terms(old_group, adv, 1.0, terms);
  return evaluate_objective(new_params, terms.sites, surrogate_closure(terms, cfg.clip_epsilon));
}

PolicyParams surrogate_gradient(const PolicyParams& new_params, const RolloutGroup& old_group,
                                std::span<const double> adv, const ApoConfig& cfg) {
  SurrogateTerms terms;
  append_surrogate_terms(old_group, adv, 1.0, terms);
  return gradient(new_params, terms.sites, surrogate_closure(terms, cfg.clip_epsilon));
}

std::vector<Task> select_batch(std::span<const Task> tasks, std::size_t batch_size, std::uint64_t seed,
                               std::size_t step) {
  std::vector<std::size_t> order(tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(stream_seed(seed, "batch", step));
  shuffle(order, rng);
  order.resize(std::min(batch_size, order.size()));
  std::vector<Task> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(tasks[i]);
  return out;
}

StepResult train_step(const PolicyParams& params, const Environment& env, std::span<const Task> batch,
                      const TrainConfig& cfg, std::size_t step, std::size_t workers) {
  cfg.validate();
  auto judge = make_judge(cfg.judge);
  RolloutConfig rollout = cfg.rollout;
  rollout.seed = stream_seed(cfg.rollout.seed, "step", step);

  StepResult result{params, {}, std::vector<RolloutGroup>(batch.size()), std::vector<GroupScore>(batch.size())};
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    result.groups[i] = run_group(rollout, params, env, batch[i]);
    result.scores[i] =
        score_group(result.groups[i], *judge, cfg.reward, cfg.p_definition, cfg.apo.advantage_epsilon);
  });

  StepStats& st = result.stats;
  st.step = step;
  std::size_t members = 0;
  std::size_t adaptive = 0;
  std::size_t adaptive_correct = 0;
  std::size_t easy_members = 0;
  std::size_t easy_instant = 0;
  std::array<std::size_t, kModeCount> chosen{};
  SurrogateTerms terms;
  const double scale = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& g = result.groups[i];
    const auto& s = result.scores[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      st.mean_reward += s.rewards[j].r_total;
      ++members;
      if (g.members[j].forced) continue;
      ++adaptive;
      ++chosen[index_of(g.members[j].mode)];
      if (s.correct[j]) ++adaptive_correct;
      if (g.task.gold_mode == Mode::Instant) {
        ++easy_members;
        if (g.members[j].mode == Mode::Instant) ++easy_instant;
      }
    }
    append_surrogate_terms(g, s.advantages, scale, terms);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  st.mean_reward = members ? st.mean_reward / static_cast<double>(members) : nan;
  for (std::size_t m = 0; m < kModeCount; ++m)
    st.allocation[m] = adaptive ? static_cast<double>(chosen[m]) / static_cast<double>(adaptive) : nan;
  st.accuracy = adaptive ? static_cast<double>(adaptive_correct) / static_cast<double>(adaptive) : nan;
  st.non_instant_ratio = adaptive ? 1.0 - st.allocation[index_of(Mode::Instant)] : nan;
  st.easy_instant_allocation =
      easy_members ? static_cast<double>(easy_instant) / static_cast<double>(easy_members) : nan;

  PolicyParams grad = gradient(params, terms.sites, surrogate_closure(terms, cfg.apo.clip_epsilon));
  auto g = grad.flat();
  auto p = result.params.flat();
  double norm = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    norm += g[k] * g[k];
    p[k] += cfg.apo.learning_rate * g[k];
  }
  st.gradient_norm = std::sqrt(norm);
  return result;
}

std::vector<ParetoPoint> pareto_trace(std::span<const StepStats> history) {
  if (history.empty()) throw Error(ErrorCode::EmptyResult, "no training steps recorded");
  std::vector<ParetoPoint> out;
  out.reserve(history.size());
  for (const auto& s : history) out.push_back({s.accuracy, s.non_instant_ratio});
  return out;
}

std::string stats_csv_header() {
  return "step,mean_reward,alloc_instant,alloc_reasoning,alloc_agentic,accuracy,non_instant_ratio,"
         "easy_instant_allocation,gradient_norm";
}

std::string stats_csv_row(const StepStats& s) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", s.step, s.mean_reward,
                     s.allocation[0], s.allocation[1], s.allocation[2], s.accuracy, s.non_instant_ratio,
                     s.easy_instant_allocation, s.gradient_norm);
}

}  // namespace moderoute
