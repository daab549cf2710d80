#include "moderoute/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "json.hpp"
#include "moderoute/error.hpp"
#include "moderoute/parallel.hpp"

namespace moderoute {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::InvalidConfig, fmt::format("bad value '{}' for {}", value, key));
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  try {
    double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, value);
}

std::size_t to_count(const std::string& key, const std::string& value) {
  if (value.empty() || !std::all_of(value.begin(), value.end(), [](unsigned char c) { return std::isdigit(c); }))
    bad_value(key, value);
  try {
    return static_cast<std::size_t>(std::stoull(value));
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

MixtureWeights to_mixture(const std::string& key, const std::string& value) {
  MixtureWeights w{};
  std::istringstream in(value);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ',')) {
    if (i == kModeCount) bad_value(key, value);
    w[i++] = to_double(key, part);
  }
  if (i != kModeCount) bad_value(key, value);
  return w;
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

std::string mode_label(const EvalOptions& opts) {
  return opts.forced ? "forced_" + std::string(mode_name(*opts.forced)) : "adaptive";
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "rho", "gamma", "tau", "alpha", "clip_epsilon", "learning_rate", "steps", "batch_size",
      "seed", "judge", "p_definition", "penalize", "advantage_epsilon", "corpus", "train_tasks",
      "eval_tasks", "mixture", "quality_logit", "input_price_per_1k", "output_price_per_1k",
      "observations_as_input", "n_probes", "keep_ratio", "dump_rollouts"};
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "rho") train.rollout.rho = to_count(key, value);
  else if (key == "gamma") train.rollout.gamma = to_count(key, value);
  else if (key == "seed") train.rollout.seed = to_count(key, value);
  else if (key == "tau") train.reward.tau = to_double(key, value);
  else if (key == "alpha") train.reward.alpha = to_double(key, value);
  else if (key == "penalize") train.reward.penalize = penalty_scope_from_name(value);
  else if (key == "clip_epsilon") train.apo.clip_epsilon = to_double(key, value);
  else if (key == "learning_rate") train.apo.learning_rate = to_double(key, value);
  else if (key == "advantage_epsilon") train.apo.advantage_epsilon = to_double(key, value);
  else if (key == "steps") train.apo.steps = to_count(key, value);
  else if (key == "batch_size") train.apo.batch_size = to_count(key, value);
  else if (key == "judge") train.judge = value;
  else if (key == "p_definition") train.p_definition = success_scope_from_name(value);
  else if (key == "corpus") corpus = value;
  else if (key == "train_tasks") train_tasks = to_count(key, value);
  else if (key == "eval_tasks") eval_tasks = to_count(key, value);
  else if (key == "mixture") mixture = to_mixture(key, value);
  else if (key == "quality_logit") quality_logit = to_double(key, value);
  else if (key == "input_price_per_1k") pricing.input_price_per_1k = to_double(key, value);
  else if (key == "output_price_per_1k") pricing.output_price_per_1k = to_double(key, value);
  else if (key == "observations_as_input") pricing.observations_as_input = to_bool(key, value);
  else if (key == "n_probes") n_probes = to_count(key, value);
  else if (key == "keep_ratio") keep_ratio = to_double(key, value);
  else if (key == "dump_rollouts") dump_rollouts = to_bool(key, value);
  else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  train.validate();
  pricing.validate();
  if (train_tasks == 0) throw Error(ErrorCode::InvalidConfig, "train_tasks must be positive");
  if (!std::isfinite(quality_logit)) throw Error(ErrorCode::InvalidConfig, "quality_logit must be finite");
  if (n_probes == 0) throw Error(ErrorCode::InvalidConfig, "n_probes must be positive");
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw Error(ErrorCode::InvalidConfig, "keep_ratio must lie in (0, 1]");
}

std::string ExperimentConfig::dump() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += fmt::format("{}={}\n", k, v); };
  line("rho", std::to_string(train.rollout.rho));
  line("gamma", std::to_string(train.rollout.gamma));
  line("seed", std::to_string(train.rollout.seed));
  line("tau", fmt_real(train.reward.tau));
  line("alpha", fmt_real(train.reward.alpha));
  line("penalize", std::string(penalty_scope_name(train.reward.penalize)));
  line("clip_epsilon", fmt_real(train.apo.clip_epsilon));
  line("learning_rate", fmt_real(train.apo.learning_rate));
  line("advantage_epsilon", fmt_real(train.apo.advantage_epsilon));
  line("steps", std::to_string(train.apo.steps));
  line("batch_size", std::to_string(train.apo.batch_size));
  line("judge", train.judge);
  line("p_definition", std::string(success_scope_name(train.p_definition)));
  line("corpus", corpus.string());
  line("train_tasks", std::to_string(train_tasks));
  line("eval_tasks", std::to_string(eval_tasks));
  line("mixture", fmt::format("{},{},{}", mixture[0], mixture[1], mixture[2]));
  line("quality_logit", fmt_real(quality_logit));
  line("input_price_per_1k", fmt_real(pricing.input_price_per_1k));
  line("output_price_per_1k", fmt_real(pricing.output_price_per_1k));
  line("observations_as_input", pricing.observations_as_input ? "true" : "false");
  line("n_probes", std::to_string(n_probes));
  line("keep_ratio", fmt_real(keep_ratio));
  line("dump_rollouts", dump_rollouts ? "true" : "false");
  return out;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path) {
  ExperimentConfig cfg;
  if (!path) return cfg;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path->string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw Error(ErrorCode::InvalidConfig, "sections are not supported: [" + key + "]");
    cfg.set(key, node.data());
  }
  // Relative corpus paths are relative to the config file.
  if (cfg.corpus.is_relative() && !std::filesystem::exists(cfg.corpus))
    cfg.corpus = path->parent_path() / cfg.corpus;
  return cfg;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  for (const auto& key : config_keys()) {
    std::string var(kEnvPrefix);
    for (char c : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(var.c_str())) cfg.set(key, v);
  }
}

std::vector<EvalRecord> evaluate_policy(const PolicyParams& params, const Environment& env,
                                        std::span<const Task> tasks, const Judge& judge,
                                        const PricingTable& pricing, const EvalOptions& opts) {
  std::vector<EvalRecord> out(tasks.size());
  const std::string key = "eval:" + mode_label(opts) + ":";
  parallel_for(tasks.size(), opts.workers, [&](std::size_t i) {
    const Task& task = tasks[i];
    Rng rng(stream_seed(opts.seed, key + task.query_id));
    Generation g = opts.forced ? generate(params, env, task, *opts.forced, true, rng)
                               : generate_adaptive(params, env, task, rng);
    EvalRecord& r = out[i];
    r.query_id = task.query_id;
    r.mode = g.mode;
    r.difficulty = task.difficulty;
    r.correct = judge.correct(task, g.trajectory.answer());
    r.tokens = count_tokens(g.trajectory, pricing, count_symbols(task.prompt));
    r.cost = token_cost(r.tokens, pricing);
  });
  return out;
}

std::vector<Task> training_tasks(const ExperimentConfig& cfg, const Environment& env) {
  return generate_tasks(env, cfg.train.rollout.seed, cfg.train_tasks, cfg.mixture);
}

std::vector<Task> evaluation_tasks(const ExperimentConfig& cfg, const Environment& env) {
  auto tasks = generate_tasks(env, stream_seed(cfg.train.rollout.seed, "eval-tasks"), cfg.eval_tasks, cfg.mixture);
  for (auto& t : tasks) t.query_id = "eval-" + t.query_id;
  return tasks;
}

TrainRun run_training(const ExperimentConfig& cfg, const Environment& env, std::span<const Task> tasks,
                      std::size_t workers, const StepObserver& observe) {
  cfg.validate();
  TrainRun run{PolicyParams(cfg.quality_logit), PolicyParams(cfg.quality_logit), {}};
  run.history.reserve(cfg.train.apo.steps);
  for (std::size_t step = 0; step < cfg.train.apo.steps; ++step) {
    auto batch = select_batch(tasks, cfg.train.apo.batch_size, cfg.train.rollout.seed, step);
    StepResult r = train_step(run.final_params, env, batch, cfg.train, step, workers);
    if (observe) observe(r);
    run.final_params = std::move(r.params);
    run.history.push_back(r.stats);
  }
  return run;
}

int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::size_t workers,
              std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  Environment env = Environment::load(cfg.corpus);
  auto tasks = training_tasks(cfg, env);
  write_tasks(out_dir / "tasks.jsonl", tasks);
  write_text(out_dir / "config.conf", cfg.dump());

  std::ofstream dump;
  if (cfg.dump_rollouts) dump.open(out_dir / "rollouts.jsonl", std::ios::binary);
  std::string stats = stats_csv_header() + "\n";
  TrainRun run = run_training(cfg, env, tasks, workers, [&](const StepResult& r) {
    stats += stats_csv_row(r.stats) + "\n";
    if (dump.is_open())
      for (std::size_t i = 0; i < r.groups.size(); ++i) write_rollout_dump(dump, r.groups[i], r.scores[i].correct);
  });
  write_checkpoint(out_dir / "params_initial.txt", run.initial);
  write_checkpoint(out_dir / "params_final.txt", run.final_params);
  write_text(out_dir / "stats.csv", stats);

  std::string pareto = "step,accuracy,non_instant_ratio\n";
  if (!run.history.empty()) {
    auto trace = pareto_trace(run.history);
    for (std::size_t i = 0; i < trace.size(); ++i)
      pareto += fmt::format("{},{:.17g},{:.17g}\n", i, trace[i].accuracy, trace[i].non_instant_ratio);
  }
  write_text(out_dir / "pareto.csv", pareto);

  if (cfg.eval_tasks > 0) {
    auto judge = make_judge(cfg.train.judge);
    auto eval = evaluation_tasks(cfg, env);
    auto records = evaluate_policy(run.final_params, env, eval, *judge, cfg.pricing,
                                   {std::nullopt, stream_seed(cfg.train.rollout.seed, "eval"), workers});
    CostReport report = cost_report(records);
    write_text(out_dir / "cost_report.json", cost_report_json(report));
    write_text(out_dir / "cost_report.csv", cost_report_csv(report));
    log << fmt::format("eval: accuracy {:.3f}, non-instant ratio {:.3f}\n", report.overall.accuracy,
                       report.non_instant_ratio);
  }
  if (!run.history.empty()) {
    const auto& first = run.history.front();
    const auto& last = run.history.back();
    log << fmt::format("trained {} steps: accuracy {:.3f} -> {:.3f}, non-instant ratio {:.3f} -> {:.3f}\n",
                       run.history.size(), first.accuracy, last.accuracy, first.non_instant_ratio,
                       last.non_instant_ratio);
  }
  log << "artifacts in " << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
             const std::optional<std::filesystem::path>& task_file, const std::filesystem::path& out_dir,
             std::size_t workers, std::ostream& log) {
  cfg.pricing.validate();
  std::filesystem::create_directories(out_dir);
  Environment env = Environment::load(cfg.corpus);
  PolicyParams params = read_checkpoint(checkpoint);
  auto tasks = task_file ? read_tasks(*task_file) : evaluation_tasks(cfg, env);
  if (tasks.empty()) throw Error(ErrorCode::EmptyResult, "no tasks to evaluate");
  auto judge = make_judge(cfg.train.judge);

  nlohmann::json report = nlohmann::json::object();
  std::string table = "run,accuracy,non_instant_ratio,mean_cost,cost_of_pass\n";
  std::vector<EvalOptions> runs = {{std::nullopt, 0, workers}};
  for (Mode m : kModes) runs.push_back({m, 0, workers});
  for (auto& opts : runs) {
    opts.seed = stream_seed(cfg.train.rollout.seed, "eval");
    auto records = evaluate_policy(params, env, tasks, *judge, cfg.pricing, opts);
    CostReport rep = cost_report(records);
    const std::string label = mode_label(opts);
    report[label] = nlohmann::json::parse(cost_report_json(rep));
    const auto& o = rep.overall;
    std::string cop = o.cost_of_pass ? fmt::format("{:.17g}", *o.cost_of_pass) : "inf";
    table += fmt::format("{},{:.17g},{:.17g},{:.17g},{}\n", label, o.accuracy, rep.non_instant_ratio,
                         o.dollar_cost / static_cast<double>(o.queries), cop);
    log << fmt::format("{:<17} accuracy {:.3f}  non-instant {:.3f}  cost-of-pass {}\n", label, o.accuracy,
                       rep.non_instant_ratio, cop);
    if (!opts.forced) {
      std::string bands = "lower,upper,count,instant,reasoning,agentic,accuracy\n";
      for (const auto& b : allocation_by_difficulty(records))
        bands += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", b.lower, b.upper, b.count,
                             b.fractions[0], b.fractions[1], b.fractions[2], b.accuracy);
      write_text(out_dir / "allocation_by_difficulty.csv", bands);
    }
  }
  write_text(out_dir / "eval_report.json", report.dump(2) + "\n");
  write_text(out_dir / "eval_accuracy.csv", table);
  return 0;
}

int cmd_tasks(const ExperimentConfig& cfg, const std::filesystem::path& out_file, std::ostream& log) {
  Environment env = Environment::load(cfg.corpus);
  auto tasks = training_tasks(cfg, env);
  if (out_file.has_parent_path()) std::filesystem::create_directories(out_file.parent_path());
  write_tasks(out_file, tasks);
  log << fmt::format("wrote {} tasks to {}\n", tasks.size(), out_file.string());
  return 0;
}

int cmd_curate(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
               const std::optional<std::filesystem::path>& task_file, const std::filesystem::path& out_dir,
               std::size_t workers, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  Environment env = Environment::load(cfg.corpus);
  PolicyParams params = checkpoint ? read_checkpoint(*checkpoint) : PolicyParams(cfg.quality_logit);
  auto tasks = task_file ? read_tasks(*task_file) : training_tasks(cfg, env);
  auto judge = make_judge(cfg.train.judge);
  auto profiles = probe_easiness(params, env, tasks, cfg.n_probes, *judge, cfg.train.rollout.seed, workers);
  auto kept = reshape_to_j(profiles, cfg.keep_ratio, cfg.train.rollout.seed);
  write_text(out_dir / "histogram_before.csv", histogram_csv(profiles));
  write_text(out_dir / "histogram_after.csv", histogram_csv(kept));
  write_tasks(out_dir / "curated_tasks.jsonl", select_tasks(tasks, kept));
  log << fmt::format("probed {} tasks x {}; kept {}\n", profiles.size(), cfg.n_probes, kept.size());
  return 0;
}

std::vector<LintVerdict> lint_corpus(std::istream& in) {
  std::vector<LintVerdict> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LintVerdict v;
    v.query_id = fmt::format("line-{}", line_no);
    try {
      auto rec = nlohmann::json::parse(line);
      v.query_id = rec.at("query_id").get<std::string>();
      Trajectory t = parse(rec.at("text").get<std::string>(), v.query_id);
      v.parsed = true;
      v.format_ok = format_reward(t) == 1.0;
      if (!v.format_ok) v.detail = "does not match the template of its declared mode";
    } catch (const Error& e) {
      v.detail = e.what();
    } catch (const nlohmann::json::exception& e) {
      v.detail = std::string("bad record: ") + e.what();
    }
    out.push_back(std::move(v));
  }
  return out;
}

int cmd_lint(const std::filesystem::path& corpus, std::ostream& log) {
  std::ifstream in(corpus);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + corpus.string() + "'");
  auto verdicts = lint_corpus(in);
  std::size_t pass = 0;
  for (const auto& v : verdicts) {
    bool ok = v.parsed && v.format_ok;
    if (ok) ++pass;
    log << (ok ? "PASS " : "FAIL ") << v.query_id << (v.detail.empty() ? "" : "  " + v.detail) << "\n";
  }
  double rate = verdicts.empty() ? 1.0 : static_cast<double>(pass) / static_cast<double>(verdicts.size());
  log << fmt::format("{} records, {} pass, format reward rate {:.4f}\n", verdicts.size(), pass, rate);
  return pass == verdicts.size() ? 0 : 1;
}

void write_trajectory_record(std::ostream& out, const Trajectory& t) {
  out << nlohmann::json{{"query_id", t.query_id()}, {"text", serialize(t)}}.dump() << '\n';
}

}  // namespace moderoute
