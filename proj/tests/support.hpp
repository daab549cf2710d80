#pragma once

#include <string>
#include <vector>

#include "moderoute/policy.hpp"
#include "moderoute/simenv.hpp"

namespace moderoute::testing {

inline const Environment& fixture_env() {
  static const Environment env = Environment::load(MODEROUTE_DATA_DIR "/corpus.jsonl");
  return env;
}

inline std::vector<Task> mixed_tasks(std::uint64_t seed, std::size_t n) {
  return generate_tasks(fixture_env(), seed, n, {1.0, 1.0, 1.0});
}

inline Task first_task_of(Mode gold, std::uint64_t seed = 7) {
  for (const auto& t : mixed_tasks(seed, 30))
    if (t.gold_mode == gold) return t;
  throw std::logic_error("no task of the requested gold mode");
}

inline PolicyParams random_params(std::uint64_t seed, double scale = 1.0) {
  PolicyParams p;
  Rng rng(seed);
  for (double& x : p.flat()) x = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

/// Every (task, mode, forced) combination generated once under `params`.
inline std::vector<std::pair<Task, Generation>> generated_corpus(const PolicyParams& params, std::uint64_t seed,
                                                                 std::size_t n_tasks) {
  std::vector<std::pair<Task, Generation>> out;
  std::size_t k = 0;
  for (const auto& task : mixed_tasks(seed, n_tasks)) {
    for (Mode m : kModes) {
      for (bool forced : {true, false}) {
        Rng rng(stream_seed(seed, task.query_id, k++));
        out.emplace_back(task, generate(params, fixture_env(), task, m, forced, rng));
      }
    }
  }
  return out;
}

}  // namespace moderoute::testing
