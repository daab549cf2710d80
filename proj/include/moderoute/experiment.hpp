#pragma once

// Experiment runner behind the moderoute command line: configuration,
// training and evaluation loops, and the artifact writers.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moderoute/apo.hpp"
#include "moderoute/curation.hpp"
#include "moderoute/metrics.hpp"

namespace moderoute {

inline constexpr std::string_view kEnvPrefix = "MODEROUTE_";

struct ExperimentConfig {
  TrainConfig train;
  PricingTable pricing;
  std::filesystem::path corpus = "data/corpus.jsonl";
  std::size_t train_tasks = 200;
  std::size_t eval_tasks = 200;
  MixtureWeights mixture = {0.5, 0.25, 0.25};
  double quality_logit = kDefaultQualityLogit;
  std::size_t n_probes = 4;
  double keep_ratio = kDefaultKeepRatio;
  bool dump_rollouts = false;

  /// Applies one key=value setting. Throws InvalidConfig for unknown keys
  /// and unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws InvalidConfig.
  void validate() const;
  /// Every setting as key=value lines, readable by load_config.
  std::string dump() const;
};

/// Keys accepted by ExperimentConfig::set.
const std::vector<std::string>& config_keys();

/// INI-style key=value file (';' comments); no path means defaults.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path);
/// Overrides from MODEROUTE_<KEY> variables, e.g. MODEROUTE_LEARNING_RATE.
void apply_env_overrides(ExperimentConfig& cfg);

struct EvalOptions {
  std::optional<Mode> forced;  // empty: adaptive routing
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// One rollout per task. Stream per task: stream_seed(seed, "eval:<mode>:" + id).
std::vector<EvalRecord> evaluate_policy(const PolicyParams& params, const Environment& env,
                                        std::span<const Task> tasks, const Judge& judge,
                                        const PricingTable& pricing, const EvalOptions& opts);

struct TrainRun {
  PolicyParams initial;
  PolicyParams final_params;
  std::vector<StepStats> history;
};

using StepObserver = std::function<void(const StepResult&)>;

TrainRun run_training(const ExperimentConfig& cfg, const Environment& env, std::span<const Task> tasks,
                      std::size_t workers, const StepObserver& observe = {});

/// Tasks for training (seed) and evaluation (derived seed) from the config.
std::vector<Task> training_tasks(const ExperimentConfig& cfg, const Environment& env);
std::vector<Task> evaluation_tasks(const ExperimentConfig& cfg, const Environment& env);

// Subcommands. Each writes its artifacts and a short report on `log`, and
// returns the process exit status.
int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::size_t workers,
              std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
             const std::optional<std::filesystem::path>& task_file, const std::filesystem::path& out_dir,
             std::size_t workers, std::ostream& log);
int cmd_tasks(const ExperimentConfig& cfg, const std::filesystem::path& out_file, std::ostream& log);
int cmd_curate(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
               const std::optional<std::filesystem::path>& task_file, const std::filesystem::path& out_dir,
               std::size_t workers, std::ostream& log);

struct LintVerdict {
  std::string query_id;
  bool parsed = false;
  bool format_ok = false;
  std::string detail;
};

/// Records are JSON lines {"query_id", "text"}.
std::vector<LintVerdict> lint_corpus(std::istream& in);
int cmd_lint(const std::filesystem::path& corpus, std::ostream& log);

void write_trajectory_record(std::ostream& out, const Trajectory& t);

}  // namespace moderoute
