#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <unordered_map>
#include <vector>

#include "scorerl/error.hpp"
#include "scorerl/nn.hpp"

namespace scorerl {

using TrajectoryId = std::int64_t;

// One full episode. Columns of `states`/`actions` are time steps; the true
// per-step rewards and return are hidden from the learner and only read by
// the scripted teacher and the diagnostics.
struct Trajectory {
  TrajectoryId id = -1;
  Eigen::MatrixXd states;     // state_dim x T, s_t
  Eigen::MatrixXd actions;    // action_dim x T, a_t
  Eigen::Matrix2Xd positions;  // 2 x (T+1), agent position at s_0 .. s_T
  std::vector<double> true_rewards;
  double true_return = 0.0;
  bool success = false;
  nlohmann::json annotations;

  Index length() const { return states.cols(); }
};

using TrajectoryPtr = std::shared_ptr<const Trajectory>;

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r_hat = 0.0;
  Eigen::VectorXd s_next;
  bool done = false;  // true terminal only; time-limit ends still bootstrap
  TrajectoryId trajectory_id = -1;
};

// Fixed-capacity FIFO ring.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("replay buffer capacity must be positive");
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  // Oldest first.
  const Transition& at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("replay buffer index");
    return data_[data_.size() < capacity_ ? i : (cursor_ + i) % capacity_];
  }

  // n uniform draws with replacement.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    if (n > 0 && data_.empty()) throw ValidationError("cannot sample from an empty replay buffer");
    std::vector<const Transition*> out;
    out.reserve(n);
    if (n == 0) return out;
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    for (std::size_t k = 0; k < n; ++k) out.push_back(&data_[pick(rng)]);
    return out;
  }

  // Replace every stored r_hat with reward(s, a). Returns the number touched.
  template <class RewardFn>
  std::size_t relabel_all(RewardFn&& reward) {
    for (auto& t : data_) t.r_hat = reward(t.s, t.a);
    return data_.size();
  }

  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

struct ScoreRange {
  double lo = 0.0;
  double hi = 10.0;

  bool contains(double s) const { return s >= lo && s <= hi; }
};

struct ScoreEvent {
  std::int64_t timestamp = 0;  // logical clock (training episode), not wall time
  double score = 0.0;
};

struct ScoredTrajectory {
  TrajectoryPtr trajectory;
  double score = 0.0;
  std::vector<ScoreEvent> history;

  TrajectoryId id() const { return trajectory->id; }
};

// Every scored trajectory, never evicted. Scores can be revised.
class ScoringBuffer {
 public:
  explicit ScoringBuffer(ScoreRange range = {}) : range_(range) {
    if (!(range_.lo < range_.hi)) throw ValidationError("scoring range must satisfy lo < hi");
  }

  const ScoreRange& range() const { return range_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ScoredTrajectory>& entries() const { return entries_; }
  const ScoredTrajectory& operator[](std::size_t i) const { return entries_[i]; }

  bool contains(TrajectoryId id) const { return index_.count(id) > 0; }

  const ScoredTrajectory& find(TrajectoryId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("trajectory " + std::to_string(id) + " not scored");
    return entries_[it->second];
  }

  void add(TrajectoryPtr trajectory, double score, std::int64_t timestamp) {
    if (!trajectory) throw ValidationError("null trajectory");
    check_score(score);
    if (contains(trajectory->id))
      throw ConflictError("trajectory " + std::to_string(trajectory->id) + " already scored");
    index_.emplace(trajectory->id, entries_.size());
    entries_.push_back({std::move(trajectory), score, {{timestamp, score}}});
  }

  void revise(TrajectoryId id, double score, std::int64_t timestamp) {
    check_score(score);
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("trajectory " + std::to_string(id) + " not scored");
    auto& entry = entries_[it->second];
    entry.score = score;
    entry.history.push_back({timestamp, score});
  }

  // One JSON object per line: id, score, score_history, steps.
  void export_jsonl(std::ostream& os) const {
    for (const auto& e : entries_) {
      nlohmann::json history = nlohmann::json::array();
      for (const auto& h : e.history) history.push_back({{"t", h.timestamp}, {"score", h.score}});
      nlohmann::json line = {{"id", e.id()},
                             {"score", e.score},
                             {"score_history", std::move(history)},
                             {"steps", e.trajectory->length()}};
      os << line.dump() << '\n';
    }
  }

 private:
  void check_score(double score) const {
    if (!std::isfinite(score) || !range_.contains(score))
      throw ValidationError("score " + std::to_string(score) + " outside [" +
                            std::to_string(range_.lo) + ", " + std::to_string(range_.hi) + "]");
  }

  ScoreRange range_;
  std::vector<ScoredTrajectory> entries_;
  std::unordered_map<TrajectoryId, std::size_t> index_;
};

}  // namespace scorerl
