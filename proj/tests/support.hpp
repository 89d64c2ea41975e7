#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "scorerl/scorerl.hpp"

namespace scorerl::test {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central difference of `loss` with respect to flat parameter `i` of `net`.
inline double central_difference(DenseNet& net, std::size_t i, const std::function<double()>& loss,
                                 double h = 1e-5) {
  double& p = net.parameter(i);
  const double saved = p;
  p = saved + h;
  const double up = loss();
  p = saved - h;
  const double down = loss();
  p = saved;
  return (up - down) / (2.0 * h);
}

// Random trajectory with the given shape; true reward per step is uniform.
inline TrajectoryPtr random_trajectory(TrajectoryId id, Index length, Rng& rng, Index state_dim = 6,
                                       Index action_dim = 2) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory t;
  t.id = id;
  t.states = Eigen::MatrixXd::NullaryExpr(state_dim, length, [&] { return u(rng); });
  t.actions = Eigen::MatrixXd::NullaryExpr(action_dim, length, [&] { return u(rng); });
  t.positions = Eigen::Matrix2Xd::NullaryExpr(2, length + 1, [&] { return u(rng); });
  for (Index k = 0; k < length; ++k) t.true_rewards.push_back(u(rng));
  t.true_return = 0.0;
  for (double r : t.true_rewards) t.true_return += r;
  return std::make_shared<const Trajectory>(std::move(t));
}

// Trajectory whose first state coordinate is constant `level` on every step.
inline TrajectoryPtr level_trajectory(TrajectoryId id, double level, Index length, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Trajectory t;
  t.id = id;
  t.states = Eigen::MatrixXd::NullaryExpr(6, length, [&] { return u(rng); });
  t.states.row(0).setConstant(level);
  t.actions = Eigen::MatrixXd::NullaryExpr(2, length, [&] { return u(rng); });
  t.positions = Eigen::Matrix2Xd::Zero(2, length + 1);
  t.true_rewards.assign(static_cast<std::size_t>(length), level);
  t.true_return = level * static_cast<double>(length);
  return std::make_shared<const Trajectory>(std::move(t));
}

// Small config for end-to-end runs inside unit tests.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.env = "PointGoal";
  c.episode_length = 20;
  c.episodes = 30;
  c.warmup_steps = 100;
  c.policy_batch = 16;
  c.reward_steps = 5;
  c.reward.hidden_units = 16;
  c.reward.hidden_layers = 2;
  c.reward.batch_size = 8;
  c.sac.hidden_units = 16;
  c.eval_interval = 10;
  c.eval_episodes = 2;
  c.schedule.fast_interval = 5;
  c.schedule.fast_queries = 3;
  c.schedule.switch_window = 5;
  return c;
}

}  // namespace scorerl::test
