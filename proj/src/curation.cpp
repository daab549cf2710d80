#include "moderoute/curation.hpp"

#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "moderoute/error.hpp"
#include "moderoute/parallel.hpp"
#include "moderoute/rng.hpp"

namespace moderoute {

std::vector<EasinessProfile> probe_easiness(const PolicyParams& params, const Environment& env,
                                            std::span<const Task> tasks, std::size_t n_probes, const Judge& judge,
                                            std::uint64_t seed, std::size_t workers) {
  if (n_probes == 0) throw Error(ErrorCode::InvalidConfig, "n_probes must be at least 1");
  std::vector<EasinessProfile> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t t) {
    const Task& task = tasks[t];
    EasinessProfile p{task.query_id, 0, n_probes};
    for (std::size_t i = 0; i < n_probes; ++i) {
      Rng rng(stream_seed(seed, "probe:" + task.query_id, i));
      Generation g = generate(params, env, task, task.gold_mode, true, rng);
      if (judge.correct(task, g.trajectory.answer())) ++p.solved;
    }
    out[t] = std::move(p);
  });
  return out;
}

std::vector<EasinessProfile> reshape_to_j(std::span<const EasinessProfile> profiles, double keep_ratio,
                                          std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0))
    throw Error(ErrorCode::InvalidConfig, fmt::format("keep_ratio must lie in (0, 1], got {}", keep_ratio));
  std::vector<std::size_t> easiest;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (profiles[i].solved == profiles[i].probes) easiest.push_back(i);
  Rng rng(stream_seed(seed, "reshape"));
  shuffle(easiest, rng);
  easiest.resize(static_cast<std::size_t>(std::llround(keep_ratio * static_cast<double>(easiest.size()))));
  std::vector<bool> keep(profiles.size(), true);
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (profiles[i].solved == profiles[i].probes) keep[i] = false;
  for (auto i : easiest) keep[i] = true;
  std::vector<EasinessProfile> out;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (keep[i]) out.push_back(profiles[i]);
  if (out.empty()) throw Error(ErrorCode::EmptyResult, "reshaping removed every task");
  return out;
}

std::vector<std::size_t> easiness_histogram(std::span<const EasinessProfile> profiles) {
  if (profiles.empty()) return {};
  const std::size_t n = profiles.front().probes;
  std::vector<std::size_t> bins(n + 1, 0);
  for (const auto& p : profiles) {
    if (p.probes != n) throw Error(ErrorCode::InvalidConfig, "profiles mix different probe counts");
    ++bins.at(p.solved);
  }
  return bins;
}

std::string histogram_csv(std::span<const EasinessProfile> profiles) {
  std::string out = "bin,count\n";
  auto bins = easiness_histogram(profiles);
  for (std::size_t k = 0; k < bins.size(); ++k) out += fmt::format("{}/{},{}\n", k, bins.size() - 1, bins[k]);
  return out;
}

std::vector<Task> select_tasks(std::span<const Task> tasks, std::span<const EasinessProfile> profiles) {
  std::unordered_map<std::string_view, const Task*> by_id;
  for (const auto& t : tasks) by_id.emplace(t.query_id, &t);
  std::vector<Task> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) {
    auto it = by_id.find(p.query_id);
    if (it == by_id.end()) throw Error(ErrorCode::InvalidConfig, "no task with query_id '" + p.query_id + "'");
    out.push_back(*it->second);
  }
  return out;
}

Mode resolve_ambiguous_label(const std::array<std::optional<double>, kModeCount>& accuracies) {
  std::optional<Mode> best;
  double best_acc = 0.0;
  for (Mode m : kModes) {  // cost order, so strict '>' keeps the cheaper mode on ties
    const auto& acc = accuracies[index_of(m)];
    if (!acc) continue;
    if (!best || *acc > best_acc) {
      best = m;
      best_acc = *acc;
    }
  }
  if (!best) throw Error(ErrorCode::EmptyResult, "no mode was probed");
  return *best;
}

}  // namespace moderoute
