#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scorerl/error.hpp"
#include "scorerl/nn.hpp"

namespace scorerl {

class Environment;
std::unique_ptr<Environment> make_environment(const std::string& name, int episode_length);

struct EnvSpec {
  std::string name;
  Index state_dim = 0;
  Index action_dim = 0;
  std::vector<std::pair<double, double>> action_bounds;
  int episode_length = 100;
  double return_min = 0.0;  // analytic lower bound on the episodic true return
  double return_max = 0.0;  // analytic upper bound
  bool sparse = false;      // evaluated by success rate rather than return
};

struct EnvState {
  Eigen::VectorXd observation;
  int step_index = 0;
  bool done = false;
  double accumulated_true_return = 0.0;
  int held_steps = 0;
};

struct StepResult {
  EnvState next;
  double true_reward = 0.0;
  bool done = false;
};

// 2-D point mass shared by both tasks. Observation layout is
// [position(2), velocity(2), target(2)].
class Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kDamping = 0.95;
  static constexpr double kArena = 1.0;

  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }

  EnvState reset(std::uint64_t seed) const {
    Rng rng(seed);
    EnvState state;
    state.observation = Eigen::VectorXd::Zero(6);
    const auto [pos, target] = spawn(rng);
    state.observation.segment<2>(0) = pos;
    state.observation.segment<2>(4) = target;
    return state;
  }

  StepResult step(const EnvState& state, const Eigen::VectorXd& action) const {
    if (state.done) throw ConflictError("step called on a finished episode");
    if (action.size() != spec_.action_dim) throw ValidationError("action has wrong dimension");
    Eigen::Vector2d a;
    for (Index d = 0; d < 2; ++d) {
      const auto [lo, hi] = spec_.action_bounds[static_cast<std::size_t>(d)];
      a(d) = std::clamp(action(d), lo, hi);
    }
    StepResult out;
    out.next = state;
    auto& obs = out.next.observation;
    Eigen::Vector2d vel = kDamping * obs.segment<2>(2) + kDt * a;
    Eigen::Vector2d pos = obs.segment<2>(0) + kDt * vel;
    for (Index d = 0; d < 2; ++d) {
      if (pos(d) > kArena || pos(d) < -kArena) {
        pos(d) = std::clamp(pos(d), -kArena, kArena);
        vel(d) = 0.0;
      }
    }
    obs.segment<2>(0) = pos;
    obs.segment<2>(2) = vel;
    out.true_reward = reward(obs);
    if (in_target(obs)) out.next.held_steps += 1;
    out.next.step_index += 1;
    out.next.accumulated_true_return += out.true_reward;
    out.next.done = out.next.step_index >= spec_.episode_length;
    out.done = out.next.done;
    return out;
  }

  // Proportional-derivative controller toward the target.
  Eigen::VectorXd expert_action(const Eigen::VectorXd& obs) const {
    Eigen::Vector2d u = kExpertGain * (obs.segment<2>(4) - obs.segment<2>(0)) -
                        kExpertDamping * obs.segment<2>(2);
    Eigen::VectorXd a(2);
    a(0) = std::clamp(u(0), -1.0, 1.0);
    a(1) = std::clamp(u(1), -1.0, 1.0);
    return a;
  }

  static Eigen::Vector2d position(const Eigen::VectorXd& observation) {
    return observation.segment<2>(0);
  }

  virtual bool success(const EnvState& state) const = 0;

  // Static scene description for trajectory playback.
  virtual nlohmann::json annotations(const EnvState& initial) const = 0;

 protected:
  static constexpr double kExpertGain = 8.0;
  static constexpr double kExpertDamping = 4.0;

  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}

  virtual std::pair<Eigen::Vector2d, Eigen::Vector2d> spawn(Rng& rng) const = 0;
  virtual double reward(const Eigen::VectorXd& observation) const = 0;
  virtual bool in_target(const Eigen::VectorXd& observation) const = 0;

  static double target_distance(const Eigen::VectorXd& observation) {
    return (observation.segment<2>(0) - observation.segment<2>(4)).norm();
  }

  EnvSpec spec_;
};

// Dense task: reward -dt * |position - goal| every step.
class PointGoal final : public Environment {
 public:
  explicit PointGoal(int episode_length = 100) : Environment(make_spec(episode_length)) {}

  // Ends the episode on the goal.
  bool success(const EnvState& state) const override { return in_target(state.observation); }

  nlohmann::json annotations(const EnvState& initial) const override {
    return {{"kind", "goal"},
            {"center", {initial.observation(4), initial.observation(5)}},
            {"radius", kGoalRadius}};
  }

  static constexpr double kSpawnLo = -0.8, kSpawnHi = -0.2;  // agent x
  static constexpr double kGoalLo = 0.2, kGoalHi = 0.8;      // goal x
  static constexpr double kBandY = 0.8;                      // |y| for both
  static constexpr double kGoalRadius = 0.05;

 private:
  static EnvSpec make_spec(int episode_length) {
    if (episode_length <= 0) throw ValidationError("episode_length must be positive");
    EnvSpec s;
    s.name = "PointGoal";
    s.state_dim = 6;
    s.action_dim = 2;
    s.action_bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
    s.episode_length = episode_length;
    // Largest possible distance inside the arena is its diagonal.
    s.return_min = -kDt * episode_length * 2.0 * std::numbers::sqrt2 * kArena;
    s.return_max = 0.0;
    s.sparse = false;
    return s;
  }

  std::pair<Eigen::Vector2d, Eigen::Vector2d> spawn(Rng& rng) const override {
    std::uniform_real_distribution<double> ax(kSpawnLo, kSpawnHi), gx(kGoalLo, kGoalHi),
        y(-kBandY, kBandY);
    Eigen::Vector2d pos(ax(rng), y(rng));
    Eigen::Vector2d goal(gx(rng), y(rng));
    return {pos, goal};
  }

  double reward(const Eigen::VectorXd& observation) const override {
    return -kDt * target_distance(observation);
  }

  bool in_target(const Eigen::VectorXd& observation) const override {
    return target_distance(observation) < kGoalRadius;
  }
};

// Sparse task: +1 for every step spent inside the button disc. Success means
// at least kHoldSteps steps on the button.
class SparseButton final : public Environment {
 public:
  explicit SparseButton(int episode_length = 100) : Environment(make_spec(episode_length)) {}

  bool success(const EnvState& state) const override { return state.held_steps >= kHoldSteps; }

  nlohmann::json annotations(const EnvState& initial) const override {
    return {{"kind", "button"},
            {"center", {initial.observation(4), initial.observation(5)}},
            {"radius", kButtonRadius}};
  }

  static constexpr double kSpawnHalfWidth = 0.3;
  static constexpr double kButtonDistance = 0.6;
  static constexpr double kButtonRadius = 0.2;
  static constexpr int kHoldSteps = 10;

 private:
  static EnvSpec make_spec(int episode_length) {
    if (episode_length <= 0) throw ValidationError("episode_length must be positive");
    EnvSpec s;
    s.name = "SparseButton";
    s.state_dim = 6;
    s.action_dim = 2;
    s.action_bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
    s.episode_length = episode_length;
    s.return_min = 0.0;
    s.return_max = static_cast<double>(episode_length);
    s.sparse = true;
    return s;
  }

  std::pair<Eigen::Vector2d, Eigen::Vector2d> spawn(Rng& rng) const override {
    std::uniform_real_distribution<double> box(-kSpawnHalfWidth, kSpawnHalfWidth);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    Eigen::Vector2d pos(box(rng), box(rng));
    const double theta = angle(rng);
    Eigen::Vector2d button(kButtonDistance * std::cos(theta), kButtonDistance * std::sin(theta));
    return {pos, button};
  }

  double reward(const Eigen::VectorXd& observation) const override {
    return in_target(observation) ? 1.0 : 0.0;
  }

  bool in_target(const Eigen::VectorXd& observation) const override {
    return target_distance(observation) <= kButtonRadius;
  }
};

inline std::unique_ptr<Environment> make_environment(const std::string& name,
                                                     int episode_length) {
  if (name == "PointGoal") return std::make_unique<PointGoal>(episode_length);
  if (name == "SparseButton") return std::make_unique<SparseButton>(episode_length);
  throw ValidationError("unknown environment '" + name + "'");
}

}  // namespace scorerl
