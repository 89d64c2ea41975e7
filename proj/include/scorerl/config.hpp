#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include "scorerl/bridge.hpp"
#include "scorerl/error.hpp"
#include "scorerl/reward.hpp"
#include "scorerl/sac.hpp"
#include "scorerl/sampling.hpp"

namespace scorerl {

enum class TeacherMode { scripted, human };
enum class RewardSource { learned, truth };

struct ScheduleConfig {
  int fast_queries = 5;      // J in the fast phase
  int fast_interval = 10;    // K in the fast phase
  int slow_queries = 10;
  int slow_interval = 100;
  double switch_threshold = 0.25;
  int switch_window = 20;
};

// Every knob of a training run. JSON keys mirror the field names.
struct RunConfig {
  std::string env = "PointGoal";
  int episode_length = 100;
  int episodes = 2000;
  std::uint64_t seed = 0;

  TeacherMode teacher = TeacherMode::scripted;
  double noise_variance = 0.0;
  double quantization_step = 0.5;
  ScoreRange scoring_range{0.0, 10.0};
  RewardSource reward_source = RewardSource::learned;

  RewardLearnerConfig reward;
  PairSamplerConfig sampler;
  SacConfig sac;
  ScheduleConfig schedule;

  int reward_steps = 50;    // M: reward gradient steps per update
  int policy_batch = 256;   // N: transitions per policy gradient step
  std::int64_t budget = 1000;
  int warmup_steps = 1000;
  int eval_interval = 20;
  int eval_episodes = 10;
  int success_window = 100;
  std::size_t replay_capacity = 1'000'000;
  int checkpoints = 5;

  void validate() const {
    if (env != "PointGoal" && env != "SparseButton")
      throw ValidationError("unknown environment '" + env + "'");
    if (episode_length <= 0 || episodes <= 0) throw ValidationError("episodes must be positive");
    if (!(scoring_range.lo < scoring_range.hi)) throw ValidationError("scoring range lo < hi");
    if (noise_variance < 0.0) throw ValidationError("noise_variance must be >= 0");
    if (budget < 0) throw ValidationError("budget must be >= 0");
    if (reward_steps < 0 || policy_batch <= 0 || warmup_steps < 0)
      throw ValidationError("reward_steps, policy_batch, warmup_steps out of range");
    if (eval_interval <= 0 || eval_episodes < 0 || success_window <= 0 || checkpoints < 2)
      throw ValidationError("evaluation settings out of range");
    if (schedule.fast_queries <= 0 || schedule.fast_interval <= 0 || schedule.slow_queries <= 0 ||
        schedule.slow_interval <= 0 || schedule.switch_window <= 0)
      throw ValidationError("schedule values must be positive");
    if (sampler.scheme == PairScheme::priority && scoring_range.lo < 0.0)
      throw ValidationError("priority sampling requires a non-negative scoring range");
    auto r = reward;
    r.scoring_range = scoring_range;
    r.validate();
    sampler.validate();
    sac.validate();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ValidationError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read;
  detail::reject_unknown(
      j,
      {"env", "episode_length", "episodes", "seed", "teacher", "noise_variance",
       "quantization_step", "scoring_range", "reward_source", "reward", "sampler", "sac",
       "schedule", "reward_steps", "policy_batch", "budget", "warmup_steps", "eval_interval",
       "eval_episodes", "success_window", "replay_capacity", "checkpoints"},
      "config");
  RunConfig c;
  read(j, "env", c.env);
  read(j, "episode_length", c.episode_length);
  read(j, "episodes", c.episodes);
  read(j, "seed", c.seed);
  if (j.contains("teacher")) {
    const auto t = j.at("teacher").get<std::string>();
    if (t == "scripted") c.teacher = TeacherMode::scripted;
    else if (t == "human") c.teacher = TeacherMode::human;
    else throw ValidationError("teacher must be 'scripted' or 'human'");
  }
  read(j, "noise_variance", c.noise_variance);
  read(j, "quantization_step", c.quantization_step);
  if (j.contains("scoring_range")) {
    const auto r = j.at("scoring_range").get<std::vector<double>>();
    if (r.size() != 2) throw ValidationError("scoring_range must be [lo, hi]");
    c.scoring_range = {r[0], r[1]};
  }
  if (j.contains("reward_source")) {
    const auto s = j.at("reward_source").get<std::string>();
    if (s == "learned") c.reward_source = RewardSource::learned;
    else if (s == "true") c.reward_source = RewardSource::truth;
    else throw ValidationError("reward_source must be 'learned' or 'true'");
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    detail::reject_unknown(r,
                           {"learning_rate", "hidden_layers", "hidden_units", "batch_size",
                            "activation", "output_activation", "lambda", "tie_threshold",
                            "num_labels", "label_mode", "constant_alpha", "input"},
                           "reward");
    read(r, "learning_rate", c.reward.learning_rate);
    read(r, "hidden_layers", c.reward.hidden_layers);
    read(r, "hidden_units", c.reward.hidden_units);
    read(r, "batch_size", c.reward.batch_size);
    if (r.contains("activation"))
      c.reward.activation = activation_from_string(r.at("activation").get<std::string>());
    if (r.contains("output_activation"))
      c.reward.output_activation =
          activation_from_string(r.at("output_activation").get<std::string>());
    read(r, "lambda", c.reward.lambda);
    read(r, "tie_threshold", c.reward.tie_threshold);
    read(r, "num_labels", c.reward.num_labels);
    if (r.contains("label_mode"))
      c.reward.label_mode = label_mode_from_string(r.at("label_mode").get<std::string>());
    read(r, "constant_alpha", c.reward.constant_alpha);
    if (r.contains("input")) {
      const auto in = r.at("input").get<std::string>();
      if (in == "state_action") c.reward.input = RewardInput::state_action;
      else if (in == "state") c.reward.input = RewardInput::state;
      else throw ValidationError("reward.input must be 'state_action' or 'state'");
    }
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    detail::reject_unknown(s, {"scheme", "beta", "entropy_pool_multiplier"}, "sampler");
    if (s.contains("scheme"))
      c.sampler.scheme = pair_scheme_from_string(s.at("scheme").get<std::string>());
    read(s, "beta", c.sampler.beta);
    read(s, "entropy_pool_multiplier", c.sampler.entropy_pool_multiplier);
  }
  if (j.contains("sac")) {
    const auto& s = j.at("sac");
    detail::reject_unknown(s,
                           {"learning_rate", "gamma", "tau", "hidden_layers", "hidden_units",
                            "activation", "initial_alpha", "auto_entropy"},
                           "sac");
    read(s, "learning_rate", c.sac.learning_rate);
    read(s, "gamma", c.sac.gamma);
    read(s, "tau", c.sac.tau);
    read(s, "hidden_layers", c.sac.hidden_layers);
    read(s, "hidden_units", c.sac.hidden_units);
    if (s.contains("activation"))
      c.sac.activation = activation_from_string(s.at("activation").get<std::string>());
    read(s, "initial_alpha", c.sac.initial_alpha);
    read(s, "auto_entropy", c.sac.auto_entropy);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::reject_unknown(s,
                           {"fast_queries", "fast_interval", "slow_queries", "slow_interval",
                            "switch_threshold", "switch_window"},
                           "schedule");
    read(s, "fast_queries", c.schedule.fast_queries);
    read(s, "fast_interval", c.schedule.fast_interval);
    read(s, "slow_queries", c.schedule.slow_queries);
    read(s, "slow_interval", c.schedule.slow_interval);
    read(s, "switch_threshold", c.schedule.switch_threshold);
    read(s, "switch_window", c.schedule.switch_window);
  }
  read(j, "reward_steps", c.reward_steps);
  read(j, "policy_batch", c.policy_batch);
  read(j, "budget", c.budget);
  read(j, "warmup_steps", c.warmup_steps);
  read(j, "eval_interval", c.eval_interval);
  read(j, "eval_episodes", c.eval_episodes);
  read(j, "success_window", c.success_window);
  read(j, "replay_capacity", c.replay_capacity);
  read(j, "checkpoints", c.checkpoints);
  c.reward.scoring_range = c.scoring_range;
  c.validate();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  auto input = c.reward.input == RewardInput::state_action ? "state_action" : "state";
  return {
      {"env", c.env},
      {"episode_length", c.episode_length},
      {"episodes", c.episodes},
      {"seed", c.seed},
      {"teacher", c.teacher == TeacherMode::scripted ? "scripted" : "human"},
      {"noise_variance", c.noise_variance},
      {"quantization_step", c.quantization_step},
      {"scoring_range", {c.scoring_range.lo, c.scoring_range.hi}},
      {"reward_source", c.reward_source == RewardSource::learned ? "learned" : "true"},
      {"reward",
       {{"learning_rate", c.reward.learning_rate},
        {"hidden_layers", c.reward.hidden_layers},
        {"hidden_units", c.reward.hidden_units},
        {"batch_size", c.reward.batch_size},
        {"activation", to_string(c.reward.activation)},
        {"output_activation", to_string(c.reward.output_activation)},
        {"lambda", c.reward.lambda},
        {"tie_threshold", c.reward.tie_threshold},
        {"num_labels", c.reward.num_labels},
        {"label_mode", to_string(c.reward.label_mode)},
        {"constant_alpha", c.reward.constant_alpha},
        {"input", input}}},
      {"sampler",
       {{"scheme", to_string(c.sampler.scheme)},
        {"beta", c.sampler.beta},
        {"entropy_pool_multiplier", c.sampler.entropy_pool_multiplier}}},
      {"sac",
       {{"learning_rate", c.sac.learning_rate},
        {"gamma", c.sac.gamma},
        {"tau", c.sac.tau},
        {"hidden_layers", c.sac.hidden_layers},
        {"hidden_units", c.sac.hidden_units},
        {"activation", to_string(c.sac.activation)},
        {"initial_alpha", c.sac.initial_alpha},
        {"auto_entropy", c.sac.auto_entropy}}},
      {"schedule",
       {{"fast_queries", c.schedule.fast_queries},
        {"fast_interval", c.schedule.fast_interval},
        {"slow_queries", c.schedule.slow_queries},
        {"slow_interval", c.schedule.slow_interval},
        {"switch_threshold", c.schedule.switch_threshold},
        {"switch_window", c.schedule.switch_window}}},
      {"reward_steps", c.reward_steps},
      {"policy_batch", c.policy_batch},
      {"budget", c.budget},
      {"warmup_steps", c.warmup_steps},
      {"eval_interval", c.eval_interval},
      {"eval_episodes", c.eval_episodes},
      {"success_window", c.success_window},
      {"replay_capacity", c.replay_capacity},
      {"checkpoints", c.checkpoints},
  };
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace scorerl
