#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "moderoute/error.hpp"
#include "moderoute/experiment.hpp"
#include "moderoute/parallel.hpp"

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> corpus;
  std::size_t workers = moderoute::default_workers();
  std::string out = "out";
  std::vector<std::string> overrides;

  moderoute::ExperimentConfig resolve() const {
    auto cfg = moderoute::load_config(config ? std::optional<std::filesystem::path>(*config) : std::nullopt);
    moderoute::apply_env_overrides(cfg);
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw moderoute::Error(moderoute::ErrorCode::InvalidConfig, "--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.train.rollout.seed = *seed;
    if (corpus) cfg.corpus = *corpus;
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value configuration file");
  cmd->add_option("--seed", c.seed, "overrides the configured seed");
  cmd->add_option("--corpus", c.corpus, "document corpus behind the simulated tools");
  cmd->add_option("--workers", c.workers, "rollout worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory (file for 'tasks')");
  cmd->add_option("--set", c.overrides, "extra key=value overrides, applied last");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive mode-routing trainer on a simulated tool environment"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint;
  std::optional<std::string> tasks_path;
  std::optional<std::string> curate_checkpoint;
  std::string lint_input;

  auto* train = app.add_subcommand("train", "run APO training and write checkpoints, stats and cost report");
  add_common(train, common);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint adaptively and under each forced mode");
  add_common(eval, common);
  eval->add_option("checkpoint", checkpoint, "parameter checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", tasks_path, "task file (default: generated evaluation tasks)");
  auto* lint = app.add_subcommand("lint", "check a trajectory corpus against the mode templates");
  lint->add_option("corpus", lint_input, "JSON lines {query_id, text}")->required();
  auto* curate = app.add_subcommand("curate", "probe task easiness and reshape toward a J-shaped histogram");
  add_common(curate, common);
  curate->add_option("--checkpoint", curate_checkpoint, "probe with these parameters");
  curate->add_option("--tasks", tasks_path, "task file (default: generated training tasks)");
  auto* tasks = app.add_subcommand("tasks", "write the configured training tasks");
  add_common(tasks, common);

  CLI11_PARSE(app, argc, argv);

  auto opt_path = [](const std::optional<std::string>& s) {
    return s ? std::optional<std::filesystem::path>(*s) : std::nullopt;
  };
  try {
    if (*train) return moderoute::cmd_train(common.resolve(), common.out, common.workers, std::cout);
    if (*eval)
      return moderoute::cmd_eval(common.resolve(), checkpoint, opt_path(tasks_path), common.out, common.workers,
                                 std::cout);
    if (*lint) return moderoute::cmd_lint(lint_input, std::cout);
    if (*curate)
      return moderoute::cmd_curate(common.resolve(), opt_path(curate_checkpoint), opt_path(tasks_path), common.out,
                                   common.workers, std::cout);
    if (*tasks) return moderoute::cmd_tasks(common.resolve(), common.out, std::cout);
  } catch (const moderoute::Error& e) {
    std::cerr << "moderoute: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "moderoute: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
