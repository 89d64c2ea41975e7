#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "scorerl/env.hpp"
#include "scorerl/metrics.hpp"
#include "scorerl/sac.hpp"
#include "scorerl/trainer.hpp"

namespace scorerl {

// Held-out episodes whose quality runs from random to expert: the expert
// action blended with uniform noise at evenly spaced mixing weights, plus
// deterministic rollouts of any supplied policy snapshots.
inline std::vector<TrajectoryPtr> quality_spanning_set(const Environment& env, int per_level,
                                                       std::uint64_t seed,
                                                       const std::vector<SacAgent>& policies = {},
                                                       int levels = 6) {
  std::vector<TrajectoryPtr> out;
  Rng rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  TrajectoryId id = 0;
  std::uint64_t episode_seed = seed * 100'003 + 7;
  for (int level = 0; level < levels; ++level) {
    const double mix = levels == 1 ? 0.0 : static_cast<double>(level) / (levels - 1);
    for (int k = 0; k < per_level; ++k) {
      out.push_back(rollout(env, episode_seed++, id++, [&](const Eigen::VectorXd& obs) {
        Eigen::VectorXd a = env.expert_action(obs);
        for (Index d = 0; d < a.size(); ++d) a(d) = (1.0 - mix) * a(d) + mix * noise(rng);
        return a;
      }));
    }
  }
  for (const auto& agent : policies) {
    for (int k = 0; k < per_level; ++k) {
      out.push_back(rollout(env, episode_seed++, id++,
                            [&](const Eigen::VectorXd& obs) { return agent.act(obs, true, rng); }));
    }
  }
  return out;
}

struct StepwiseError {
  double mae = 0.0;
  double true_reward_std = 0.0;
  std::size_t steps = 0;
};

inline StepwiseError stepwise_error(const RewardModel& model, const std::vector<TrajectoryPtr>& set,
                                    double scale) {
  StepwiseError e;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& t : set) {
    for (const auto& s : stepwise_alignment(model, *t, scale)) {
      e.mae += std::abs(s.truth - s.scaled_prediction);
      sum += s.truth;
      sum_sq += s.truth * s.truth;
      ++e.steps;
    }
  }
  if (e.steps == 0) throw ValidationError("stepwise_error: no steps");
  const auto n = static_cast<double>(e.steps);
  e.mae /= n;
  e.true_reward_std = std::sqrt(std::max(0.0, sum_sq / n - (sum / n) * (sum / n)));
  return e;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw NotFoundError("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

// Every checkpoints/policy_k.json of a run directory, in order.
inline std::vector<SacAgent> load_policy_checkpoints(const std::filesystem::path& run_dir) {
  const RunConfig cfg = run_config_from_json(read_json_file(run_dir / "config.json"));
  const auto env = make_environment(cfg.env, cfg.episode_length);
  std::vector<SacAgent> policies;
  for (int k = 0;; ++k) {
    const auto p = run_dir / "checkpoints" / ("policy_" + std::to_string(k) + ".json");
    if (!std::filesystem::exists(p)) break;
    Rng init(0);
    SacAgent agent(env->spec(), cfg.sac, init);
    agent.load_policy(read_json_file(p));
    policies.push_back(std::move(agent));
  }
  return policies;
}

inline std::vector<double> eval_curve_from_metrics(const std::filesystem::path& metrics) {
  std::ifstream in(metrics);
  if (!in) throw NotFoundError("cannot open " + metrics.string());
  std::vector<double> curve;
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("eval_normalized")) curve.push_back(j["eval_normalized"].get<double>());
  }
  return curve;
}

}  // namespace scorerl
