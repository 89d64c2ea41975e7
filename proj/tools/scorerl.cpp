#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "scorerl/scorerl.hpp"

namespace fs = std::filesystem;
using namespace scorerl;

namespace {

struct RunArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string teacher;
  std::string pair_sampler;
  std::string label_mode;
  double noise_var = -1.0;
  std::int64_t budget = -1;
  int episodes = -1;
  std::string out = "runs/run";
  bool true_reward = false;
  int port = 8080;
  std::string static_dir;
};

RunConfig build_config(const RunArgs& a) {
  RunConfig c = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed_set) c.seed = a.seed;
  if (a.teacher == "human") c.teacher = TeacherMode::human;
  else if (a.teacher == "scripted") c.teacher = TeacherMode::scripted;
  if (!a.pair_sampler.empty()) c.sampler.scheme = pair_scheme_from_string(a.pair_sampler);
  if (!a.label_mode.empty()) c.reward.label_mode = label_mode_from_string(a.label_mode);
  if (a.noise_var >= 0.0) c.noise_variance = a.noise_var;
  if (a.budget >= 0) c.budget = a.budget;
  if (a.episodes > 0) c.episodes = a.episodes;
  if (a.true_reward) c.reward_source = RewardSource::truth;
  c.reward.scoring_range = c.scoring_range;
  c.validate();
  return c;
}

int cmd_run(const RunArgs& a) {
  const RunConfig cfg = build_config(a);
  if (cfg.teacher == TeacherMode::scripted) {
    const auto report = run_experiment(cfg, a.out);
    std::cout << "final_performance " << report.final_performance << " scores " << report.scores_used
              << " -> " << a.out << '\n';
    return 0;
  }
  HumanBridge bridge;
  ScoringServer server(bridge, cfg.scoring_range, a.static_dir);
  const int port = server.start("0.0.0.0", a.port);
  std::cout << "scoring service on http://localhost:" << port << '\n' << std::flush;
  const auto report = run_experiment(cfg, a.out, &bridge);
  std::cout << "final_performance " << report.final_performance << " scores " << report.scores_used
            << " -> " << a.out << '\n';
  return 0;
}

struct Arm {
  std::string name;
  std::optional<PairScheme> scheme;
  std::optional<LabelMode> label;
};

Arm parse_arm(const std::string& name) {
  for (auto s : {"uniform", "entropy", "priority"})
    if (name == s) return {name, pair_scheme_from_string(name), std::nullopt};
  for (auto s : {"adaptive", "constant", "hard"})
    if (name == s) return {name, std::nullopt, label_mode_from_string(name)};
  throw ValidationError("unknown arm '" + name + "'");
}

int cmd_ablate(const RunArgs& base, const std::string& arms_csv, int seeds, const std::string& out) {
  std::vector<Arm> arms;
  std::stringstream ss(arms_csv);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) arms.push_back(parse_arm(item));
  if (arms.empty()) throw ValidationError("--arms is empty");
  const RunConfig cfg = build_config(base);
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& arm : arms) {
    std::vector<double> finals;
    for (int s = 0; s < seeds; ++s) {
      RunConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(s);
      if (arm.scheme) c.sampler.scheme = *arm.scheme;
      if (arm.label) c.reward.label_mode = *arm.label;
      const auto dir = fs::path(out) / arm.name / ("seed" + std::to_string(c.seed));
      const auto report = run_experiment(c, dir);
      finals.push_back(report.final_performance);
      std::cout << arm.name << " seed " << c.seed << " final " << report.final_performance << '\n';
    }
    double mean = 0.0;
    for (double f : finals) mean += f;
    mean /= static_cast<double>(finals.size());
    summary[arm.name] = {{"final", finals}, {"mean", mean}};
  }
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_analyze(const std::string& run_dir, const std::string& baseline_dir, int per_level) {
  const fs::path dir(run_dir);
  const RunConfig cfg = run_config_from_json(read_json_file(dir / "config.json"));
  const auto env = make_environment(cfg.env, cfg.episode_length);
  RewardModel model(dense_net_from_json(read_json_file(dir / "checkpoints" / "reward.json")),
                    cfg.reward.input);

  // Policies of an independent run make the set held out from this run's scoring data.
  const auto policies = load_policy_checkpoints(baseline_dir.empty() ? dir : fs::path(baseline_dir));
  const auto set = quality_spanning_set(*env, per_level, 424242, policies);
  const auto corr = return_correlation(model, set);
  const auto err = stepwise_error(model, set, corr.scale);

  nlohmann::json report = {{"trajectories", set.size()},
                           {"pearson", corr.pearson_r},
                           {"kendall_tau_b", corr.kendall.tau_b},
                           {"step_scale", corr.scale},
                           {"stepwise_mae", err.mae},
                           {"true_step_std", err.true_reward_std}};
  if (!baseline_dir.empty()) {
    report["eval_curve"] = eval_curve_from_metrics(dir / "metrics.jsonl");
    report["baseline_eval_curve"] = eval_curve_from_metrics(fs::path(baseline_dir) / "metrics.jsonl");
  }
  std::ofstream(dir / "correlation.json") << report.dump(2) << '\n';

  std::ofstream returns(dir / "returns.csv");
  returns << "trajectory,true_return,predicted_return\n";
  for (std::size_t i = 0; i < set.size(); ++i)
    returns << set[i]->id << ',' << corr.true_returns[i] << ',' << corr.predicted_returns[i] << '\n';

  std::ofstream align(dir / "alignment.csv");
  align << "trajectory,step,true_reward,scaled_predicted_reward\n";
  for (const auto& t : set) {
    const auto steps = stepwise_alignment(model, *t, corr.scale);
    for (std::size_t k = 0; k < steps.size(); ++k)
      align << t->id << ',' << k << ',' << steps[k].truth << ',' << steps[k].scaled_prediction << '\n';
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

void add_run_options(CLI::App* app, RunArgs& a) {
  app->add_option("--config", a.config, "JSON run configuration");
  app->add_option_function<std::uint64_t>(
      "--seed", [&a](std::uint64_t s) { a.seed = s; a.seed_set = true; }, "random seed");
  app->add_option("--teacher", a.teacher, "scripted or human")->check(CLI::IsMember({"scripted", "human"}));
  app->add_option("--pair-sampler", a.pair_sampler, "uniform, entropy or priority")
      ->check(CLI::IsMember({"uniform", "entropy", "priority"}));
  app->add_option("--label-mode", a.label_mode, "adaptive, constant or hard")
      ->check(CLI::IsMember({"adaptive", "constant", "hard"}));
  app->add_option("--noise-var", a.noise_var, "scripted teacher noise variance");
  app->add_option("--budget", a.budget, "maximum number of scores");
  app->add_option("--episodes", a.episodes, "training episodes");
  app->add_flag("--true-reward", a.true_reward, "train the policy on the environment reward");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-based reward learning with soft actor-critic"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "train one agent");
  add_run_options(run, run_args);
  run->add_option("--out", run_args.out, "output directory");
  run->add_option("--port", run_args.port, "scoring service port (human teacher)");
  run->add_option("--static-dir", run_args.static_dir, "directory served at / (scoring UI bundle)");

  RunArgs ablate_args;
  std::string arms = "uniform,entropy,priority";
  int seeds = 3;
  std::string ablate_out = "runs/ablate";
  auto* ablate = app.add_subcommand("ablate", "compare sampling schemes or label modes over seeds");
  add_run_options(ablate, ablate_args);
  ablate->add_option("--arms", arms, "comma separated arm names");
  ablate->add_option("--seeds", seeds, "seeds per arm")->check(CLI::PositiveNumber);
  ablate->add_option("--out", ablate_out, "output directory");

  std::string run_dir, baseline_dir;
  int per_level = 10;
  auto* analyze = app.add_subcommand("analyze", "correlate a trained reward with true returns");
  analyze->add_option("--run", run_dir, "run directory")->required();
  analyze->add_option("--baseline", baseline_dir, "true-reward run to compare learning curves with");
  analyze->add_option("--per-level", per_level, "episodes per quality level")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_args);
    if (*ablate) return cmd_ablate(ablate_args, arms, seeds, ablate_out);
    if (*analyze) return cmd_analyze(run_dir, baseline_dir, per_level);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged in " << e.source() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
