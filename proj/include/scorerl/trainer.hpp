#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "scorerl/bridge.hpp"
#include "scorerl/buffers.hpp"
#include "scorerl/config.hpp"
#include "scorerl/env.hpp"
#include "scorerl/reward_learner.hpp"
#include "scorerl/sac.hpp"
#include "scorerl/sampling.hpp"
#include "scorerl/teacher.hpp"

namespace scorerl {

// Independent random streams derived from the run seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

inline double normalized_return(const EnvSpec& spec, double g) {
  return (g - spec.return_min) / (spec.return_max - spec.return_min);
}

// Accumulates one episode into a Trajectory.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const Environment& env, const EnvState& initial, TrajectoryId id)
      : spec_(env.spec()) {
    traj_.id = id;
    traj_.annotations = env.annotations(initial);
    const auto t = static_cast<std::size_t>(spec_.episode_length);
    states_.reserve(t);
    actions_.reserve(t);
    positions_.push_back(Environment::position(initial.observation));
  }

  void record(const EnvState& before, const Eigen::VectorXd& action, const StepResult& step) {
    states_.push_back(before.observation);
    actions_.push_back(action);
    positions_.push_back(Environment::position(step.next.observation));
    traj_.true_rewards.push_back(step.true_reward);
  }

  TrajectoryPtr finish(const Environment& env, const EnvState& final_state) {
    const auto n = static_cast<Index>(states_.size());
    traj_.states.resize(spec_.state_dim, n);
    traj_.actions.resize(spec_.action_dim, n);
    for (Index k = 0; k < n; ++k) {
      traj_.states.col(k) = states_[static_cast<std::size_t>(k)];
      traj_.actions.col(k) = actions_[static_cast<std::size_t>(k)];
    }
    traj_.positions.resize(2, n + 1);
    for (Index k = 0; k <= n; ++k) traj_.positions.col(k) = positions_[static_cast<std::size_t>(k)];
    traj_.true_return = final_state.accumulated_true_return;
    traj_.success = env.success(final_state);
    return std::make_shared<const Trajectory>(std::move(traj_));
  }

 private:
  EnvSpec spec_;
  Trajectory traj_;
  std::vector<Eigen::VectorXd> states_, actions_;
  std::vector<Eigen::Vector2d> positions_;
};

// Roll out one episode with `policy(observation) -> action`.
template <class Policy>
TrajectoryPtr rollout(const Environment& env, std::uint64_t seed, TrajectoryId id, Policy&& policy) {
  EnvState state = env.reset(seed);
  TrajectoryRecorder rec(env, state, id);
  while (!state.done) {
    Eigen::VectorXd a = policy(state.observation);
    auto step = env.step(state, a);
    rec.record(state, a, step);
    state = std::move(step.next);
  }
  return rec.finish(env, state);
}

struct EpisodeRecord {
  int episode = 0;
  std::int64_t env_steps = 0;
  double true_return = 0.0;
  double normalized = 0.0;
  bool success = false;
  double success_rate = 0.0;  // trailing window of training episodes
  std::int64_t scores_used = 0;
  std::size_t scored = 0;
  SchedulePhase phase = SchedulePhase::fast;
  std::optional<EvalPoint> eval;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"episode", episode},
                        {"env_steps", env_steps},
                        {"return", true_return},
                        {"normalized_return", normalized},
                        {"success", success},
                        {"success_rate", success_rate},
                        {"scores", scores_used},
                        {"D", scored},
                        {"phase", scorerl::to_string(phase)}};
    if (eval) {
      j["eval_return"] = eval->mean_return;
      j["eval_normalized"] = eval->normalized;
      j["eval_success"] = eval->success_rate;
    }
    return j;
  }
};

struct RunReport {
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalPoint> evals;
  std::vector<double> score_sequence;  // every score in the order it was issued
  std::int64_t scores_used = 0;
  std::int64_t reward_updates = 0;
  double final_performance = 0.0;  // dense: last eval normalized return; sparse: success rate
  std::vector<nlohmann::json> policy_checkpoints;
  nlohmann::json reward_checkpoint;
  std::optional<int> phase_switch_episode;
};

// Closed loop: collect episodes with the current policy, label them with the
// current reward, query the teacher on a schedule, refit the reward, relabel
// the replay buffer and keep training the policy.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg, HumanBridge* bridge = nullptr)
      : cfg_((cfg.reward.scoring_range = cfg.scoring_range, cfg.validate(), cfg)),
        env_(make_environment(cfg_.env, cfg_.episode_length)),
        init_rng_(make_stream(cfg_.seed, 1)),
        policy_rng_(make_stream(cfg_.seed, 2)),
        sampler_rng_(make_stream(cfg_.seed, 3)),
        query_rng_(make_stream(cfg_.seed, 4)),
        episode_seeds_(make_stream(cfg_.seed, 5)),
        teacher_(teacher_config(), cfg_.seed * 7919 + 17),
        reward_(env_->spec().state_dim, env_->spec().action_dim, cfg_.reward, init_rng_),
        agent_(env_->spec(), cfg_.sac, init_rng_),
        replay_(cfg_.replay_capacity),
        scored_(cfg_.scoring_range),
        bridge_(bridge) {
    if (cfg_.teacher == TeacherMode::human && bridge_ == nullptr)
      throw ValidationError("human teacher mode needs a service bridge");
  }

  const RunConfig& config() const { return cfg_; }
  const Environment& environment() const { return *env_; }
  const ScoringBuffer& scoring_buffer() const { return scored_; }
  const ReplayBuffer& replay_buffer() const { return replay_; }
  const RewardLearner& reward_learner() const { return reward_; }
  const SacAgent& agent() const { return agent_; }
  SchedulePhase phase() const { return phase_; }
  std::int64_t scores_used() const { return scores_used_; }

  TeacherConfig teacher_config() const {
    TeacherConfig t;
    t.range = cfg_.scoring_range;
    t.noise_variance = cfg_.noise_variance;
    t.quantization_step = cfg_.quantization_step;
    t.return_min = env_->spec().return_min;
    t.return_max = env_->spec().return_max;
    return t;
  }

  // Runs every configured episode. When `out_dir` is non-empty, writes
  // metrics.jsonl, reward_log.jsonl, scoring_buffer.jsonl, config.json and
  // checkpoints/ there.
  RunReport run(const std::filesystem::path& out_dir = {}) {
    out_dir_ = out_dir;
    std::ofstream metrics;
    if (!out_dir_.empty()) {
      std::filesystem::create_directories(out_dir_ / "checkpoints");
      std::ofstream(out_dir_ / "config.json") << to_json(cfg_).dump(2) << '\n';
      metrics.open(out_dir_ / "metrics.jsonl");
      reward_log_.open(out_dir_ / "reward_log.jsonl");
    }
    const auto checkpoint_at = checkpoint_episodes();
    try {
      for (int ep = 0; ep < cfg_.episodes; ++ep) {
        if (checkpoint_at.count(ep)) save_policy_checkpoint();
        auto rec = run_episode();
        if (metrics) metrics << rec.to_json().dump() << '\n';
        report_.episodes.push_back(std::move(rec));
      }
      save_policy_checkpoint();
    } catch (const DivergenceError&) {
      write_final_artifacts();
      throw;
    }
    report_.scores_used = scores_used_;
    report_.final_performance = final_performance();
    report_.reward_checkpoint = to_json(reward_.model().net());
    write_final_artifacts();
    publish_snapshot(true);
    return report_;
  }

  // One training episode followed by the scoring/reward-update bookkeeping.
  EpisodeRecord run_episode() {
    const auto& spec = env_->spec();
    EnvState state = env_->reset(episode_seeds_());
    const TrajectoryId id = next_trajectory_id_++;
    TrajectoryRecorder rec(*env_, state, id);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    while (!state.done) {
      Eigen::VectorXd a(spec.action_dim);
      if (env_steps_ < cfg_.warmup_steps) {
        for (Index d = 0; d < spec.action_dim; ++d) {
          const auto [lo, hi] = spec.action_bounds[static_cast<std::size_t>(d)];
          a(d) = lo + (hi - lo) * 0.5 * (uniform(policy_rng_) + 1.0);
        }
      } else {
        a = agent_.act(state.observation, false, policy_rng_);
      }
      auto step = env_->step(state, a);
      rec.record(state, a, step);
      Transition t;
      t.s = state.observation;
      t.a = a;
      t.r_hat = cfg_.reward_source == RewardSource::truth ? step.true_reward
                                                          : reward_.model()(t.s, t.a);
      t.s_next = step.next.observation;
      t.done = false;  // both tasks end on the time limit only
      t.trajectory_id = id;
      replay_.push(std::move(t));
      state = std::move(step.next);
      ++env_steps_;
      if (env_steps_ >= cfg_.warmup_steps && replay_.size() >= static_cast<std::size_t>(cfg_.policy_batch)) {
        agent_.update(SacBatch::from(replay_.sample(static_cast<std::size_t>(cfg_.policy_batch), policy_rng_)),
                      policy_rng_);
      }
    }
    auto traj = rec.finish(*env_, state);
    recent_.push_back(traj);
    const int episode = episode_++;
    successes_.push_back(traj->success);
    if (successes_.size() > static_cast<std::size_t>(cfg_.success_window)) successes_.pop_front();
    returns_.push_back(traj->true_return);

    if (cfg_.reward_source == RewardSource::learned) {
      if (cfg_.teacher == TeacherMode::human) service_human_messages();
      if (++episodes_since_round_ >= interval()) {
        episodes_since_round_ = 0;
        const std::size_t added = scoring_round();
        if (cfg_.teacher == TeacherMode::scripted && added > 0) update_reward();
      }
      maybe_switch_phase();
    }
    recent_trim();

    EpisodeRecord r;
    r.episode = episode;
    r.env_steps = env_steps_;
    r.true_return = traj->true_return;
    r.normalized = normalized_return(spec, traj->true_return);
    r.success = traj->success;
    r.success_rate = trailing_success();
    r.scores_used = scores_used_;
    r.scored = scored_.size();
    r.phase = phase_;
    if ((episode + 1) % cfg_.eval_interval == 0 && cfg_.eval_episodes > 0) {
      r.eval = evaluate(episode);
      report_.evals.push_back(*r.eval);
    }
    publish_snapshot(false);
    return r;
  }

  // Select up to J of the episodes since the last round by k-means over
  // predicted returns. Scripted mode scores them immediately; human mode
  // posts them to the service. Returns the number of entries added to D.
  std::size_t scoring_round() {
    if (recent_.empty()) return 0;
    if (cfg_.teacher == TeacherMode::human && !pending_.empty()) return 0;
    const std::int64_t remaining = cfg_.budget - scores_used_ - static_cast<std::int64_t>(pending_.size());
    if (remaining <= 0) return 0;
    const int j = static_cast<int>(std::min<std::int64_t>(queries(), remaining));
    const std::vector<TrajectoryPtr> candidates(recent_.end() - std::min<std::ptrdiff_t>(recent_.size(), interval()),
                                                recent_.end());
    const auto selection = select_queries_kmeans(reward_.model(), candidates, j, query_rng_);
    std::size_t added = 0;
    for (TrajectoryId id : selection.selected_ids) {
      const auto it = std::find_if(candidates.begin(), candidates.end(),
                                   [&](const TrajectoryPtr& t) { return t->id == id; });
      if (cfg_.teacher == TeacherMode::scripted) {
        const double s = teacher_.score(**it);
        scored_.add(*it, s, episode_);
        report_.score_sequence.push_back(s);
        ++scores_used_;
        ++added;
      } else {
        ScoreQuery q;
        q.query_id = next_query_id_++;
        q.trajectory_id = id;
        q.render = make_render_data(**it);
        q.predicted_return = reward_.model().predicted_return(**it);
        q.created_at = episode_;
        pending_.emplace(q.query_id, *it);
        bridge_->outgoing.push(std::move(q));
      }
    }
    if (cfg_.teacher == TeacherMode::human) round_scored_ = 0;
    recent_.clear();
    return added;
  }

  // Refit the reward and relabel every stored transition with it.
  RewardUpdateStats update_reward() {
    auto stats = reward_.update(scored_, cfg_.sampler, cfg_.reward_steps, sampler_rng_,
                                reward_log_.is_open() ? &reward_log_ : nullptr);
    if (stats.skipped) {
      std::cerr << "warning: reward update skipped, scoring buffer holds " << scored_.size()
                << " trajectories\n";
      return stats;
    }
    const auto& model = reward_.model();
    replay_.relabel_all([&](const Eigen::VectorXd& s, const Eigen::VectorXd& a) { return model(s, a); });
    ++report_.reward_updates;
    return stats;
  }

  SchedulePhase maybe_switch_phase() {
    if (phase_ == SchedulePhase::slow) return phase_;
    const auto progress = progress_estimate();
    if (progress && *progress >= cfg_.schedule.switch_threshold) switch_to_slow();
    return phase_;
  }

  // Trailing performance measure compared against the switch threshold.
  // Scripted runs use ground truth: for sparse tasks the mean return as a
  // fraction of the maximum, for dense ones the fraction of the way from the
  // initial return level to the maximum. Human runs only see scores, so they
  // use the mean of the latest scores.
  std::optional<double> progress_estimate() const {
    const auto window = static_cast<std::size_t>(cfg_.schedule.switch_window);
    if (cfg_.teacher == TeacherMode::human) {
      if (scored_.size() < window) return std::nullopt;
      double sum = 0.0;
      for (std::size_t k = scored_.size() - window; k < scored_.size(); ++k) sum += scored_[k].score;
      return (sum / static_cast<double>(window) - cfg_.scoring_range.lo) /
             (cfg_.scoring_range.hi - cfg_.scoring_range.lo);
    }
    const auto& spec = env_->spec();
    const auto mean = [](auto first, auto last) {
      return std::accumulate(first, last, 0.0) / static_cast<double>(std::distance(first, last));
    };
    if (spec.sparse) {
      if (returns_.size() < window) return std::nullopt;
      const double recent = mean(returns_.end() - static_cast<std::ptrdiff_t>(window), returns_.end());
      return (recent - spec.return_min) / (spec.return_max - spec.return_min);
    }
    if (returns_.size() < 2 * window) return std::nullopt;
    const double start = mean(returns_.begin(), returns_.begin() + static_cast<std::ptrdiff_t>(window));
    const double recent = mean(returns_.end() - static_cast<std::ptrdiff_t>(window), returns_.end());
    const double span = spec.return_max - start;
    if (span <= 0.0) return 1.0;
    return (recent - start) / span;
  }

  EvalPoint evaluate(int episode) const {
    EvalPoint e;
    e.episode = episode;
    Rng unused(0);
    double total = 0.0;
    int hits = 0;
    for (int k = 0; k < cfg_.eval_episodes; ++k) {
      // Fixed evaluation seeds, shared by every run.
      const auto t = rollout(*env_, 1'000'000 + static_cast<std::uint64_t>(k), -1,
                             [&](const Eigen::VectorXd& s) { return agent_.act(s, true, unused); });
      total += t->true_return;
      hits += t->success ? 1 : 0;
    }
    e.mean_return = total / cfg_.eval_episodes;
    e.normalized = normalized_return(env_->spec(), e.mean_return);
    e.success_rate = static_cast<double>(hits) / cfg_.eval_episodes;
    return e;
  }

  double trailing_success() const {
    if (successes_.empty()) return 0.0;
    return static_cast<double>(std::count(successes_.begin(), successes_.end(), true)) /
           static_cast<double>(successes_.size());
  }

  double final_performance() const {
    if (env_->spec().sparse) return trailing_success();
    if (report_.evals.empty()) return evaluate(episode_).normalized;
    return report_.evals.back().normalized;
  }

  void switch_to_slow() {
    if (phase_ == SchedulePhase::slow) return;
    phase_ = SchedulePhase::slow;
    report_.phase_switch_episode = episode_;
  }

 private:
  int interval() const {
    return phase_ == SchedulePhase::fast ? cfg_.schedule.fast_interval : cfg_.schedule.slow_interval;
  }
  int queries() const {
    return phase_ == SchedulePhase::fast ? cfg_.schedule.fast_queries : cfg_.schedule.slow_queries;
  }

  void recent_trim() {
    const auto keep = static_cast<std::size_t>(std::max(cfg_.schedule.fast_interval, cfg_.schedule.slow_interval));
    while (recent_.size() > keep) recent_.pop_front();
  }

  // Apply teacher messages; once the outstanding round is fully resolved and
  // at least one score arrived, refit the reward.
  void service_human_messages() {
    bool had_pending = !pending_.empty();
    bool revised = false;
    for (auto& msg : bridge_->incoming.drain()) {
      switch (msg.kind) {
        case TeacherMessage::Kind::score: {
          auto it = pending_.find(msg.query_id);
          if (it == pending_.end()) break;
          if (scores_used_ < cfg_.budget && !scored_.contains(it->second->id)) {
            scored_.add(it->second, msg.score, episode_);
            report_.score_sequence.push_back(msg.score);
            ++scores_used_;
            ++round_scored_;
          }
          pending_.erase(it);
          break;
        }
        case TeacherMessage::Kind::skip:
          pending_.erase(msg.query_id);
          break;
        case TeacherMessage::Kind::revise:
          if (scored_.contains(msg.trajectory_id)) {
            scored_.revise(msg.trajectory_id, msg.score, episode_);
            revised = true;
          }
          break;
        case TeacherMessage::Kind::phase:
          if (msg.phase == SchedulePhase::slow) switch_to_slow();
          break;
      }
    }
    if (had_pending && pending_.empty() && round_scored_ > 0) {
      round_scored_ = 0;
      update_reward();
    }
    if (revised || had_pending) write_scoring_export();
  }

  void publish_snapshot(bool finished) {
    if (!bridge_) return;
    auto snap = std::make_shared<TrainerSnapshot>();
    snap->episode = episode_;
    snap->phase = phase_;
    snap->budget_used = scores_used_;
    snap->budget = cfg_.budget;
    snap->finished = finished;
    snap->eval_curve = report_.evals;
    for (const auto& e : scored_.entries())
      snap->scored.push_back({e.id(), e.score, reward_.model().predicted_return(*e.trajectory),
                              make_render_data(*e.trajectory)});
    bridge_->publish(std::move(snap));
  }

  std::set<int> checkpoint_episodes() const {
    std::set<int> at;
    const int n = cfg_.checkpoints;
    for (int k = 0; k < n - 1; ++k) at.insert(static_cast<int>(std::llround(
                                         static_cast<double>(k) * cfg_.episodes / (n - 1))));
    return at;
  }

  void save_policy_checkpoint() {
    auto j = to_json(agent_.policy());
    if (!out_dir_.empty()) {
      std::ofstream(out_dir_ / "checkpoints" /
                    ("policy_" + std::to_string(report_.policy_checkpoints.size()) + ".json"))
          << j.dump() << '\n';
    }
    report_.policy_checkpoints.push_back(std::move(j));
  }

  void write_scoring_export() const {
    if (out_dir_.empty()) return;
    std::ofstream out(out_dir_ / "scoring_buffer.jsonl");
    scored_.export_jsonl(out);
  }

  void write_final_artifacts() {
    if (out_dir_.empty()) return;
    write_scoring_export();
    std::ofstream(out_dir_ / "checkpoints" / "reward.json") << to_json(reward_.model().net()).dump() << '\n';
    std::ofstream(out_dir_ / "checkpoints" / "sac.json") << agent_.checkpoint().dump() << '\n';
    nlohmann::json summary = {{"final_performance", final_performance()},
                              {"scores_used", scores_used_},
                              {"reward_updates", report_.reward_updates},
                              {"episodes", episode_},
                              {"env_steps", env_steps_},
                              {"phase", scorerl::to_string(phase_)}};
    std::ofstream(out_dir_ / "report.json") << summary.dump(2) << '\n';
  }

  RunConfig cfg_;
  std::unique_ptr<Environment> env_;
  Rng init_rng_, policy_rng_, sampler_rng_, query_rng_, episode_seeds_;
  ScriptedTeacher teacher_;
  RewardLearner reward_;
  SacAgent agent_;
  ReplayBuffer replay_;
  ScoringBuffer scored_;
  HumanBridge* bridge_ = nullptr;

  std::deque<TrajectoryPtr> recent_;
  std::deque<bool> successes_;
  std::vector<double> returns_;
  std::map<std::int64_t, TrajectoryPtr> pending_;  // query id -> trajectory
  int round_scored_ = 0;
  SchedulePhase phase_ = SchedulePhase::fast;
  int episode_ = 0;
  int episodes_since_round_ = 0;
  std::int64_t env_steps_ = 0;
  std::int64_t scores_used_ = 0;
  TrajectoryId next_trajectory_id_ = 0;
  std::int64_t next_query_id_ = 0;
  RunReport report_;
  std::filesystem::path out_dir_;
  std::ofstream reward_log_;
};

inline RunReport run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir = {},
                                HumanBridge* bridge = nullptr) {
  Trainer trainer(cfg, bridge);
  return trainer.run(out_dir);
}

}  // namespace scorerl
