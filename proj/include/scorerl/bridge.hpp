#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scorerl/buffers.hpp"

namespace scorerl {

// Unbounded multi-producer queue; consumers poll without blocking.
template <class T>
class Channel {
 public:
  void push(T value) {
    std::lock_guard lock(mutex_);
    items_.push_back(std::move(value));
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  std::vector<T> drain() {
    std::lock_guard lock(mutex_);
    std::vector<T> out(std::make_move_iterator(items_.begin()),
                       std::make_move_iterator(items_.end()));
    items_.clear();
    return out;
  }

 private:
  std::mutex mutex_;
  std::deque<T> items_;
};

enum class SchedulePhase { fast, slow };

inline std::string_view to_string(SchedulePhase p) { return p == SchedulePhase::fast ? "fast" : "slow"; }

inline SchedulePhase phase_from_string(std::string_view s) {
  if (s == "fast") return SchedulePhase::fast;
  if (s == "slow") return SchedulePhase::slow;
  throw ValidationError("unknown phase '" + std::string(s) + "'");
}

enum class QueryStatus { pending, scored, skipped };

inline std::string_view to_string(QueryStatus s) {
  switch (s) {
    case QueryStatus::pending: return "pending";
    case QueryStatus::scored: return "scored";
    case QueryStatus::skipped: return "skipped";
  }
  return "pending";
}

// Playback data: down-sampled 2-D positions plus scene annotations.
struct RenderData {
  std::vector<std::array<double, 2>> positions;
  nlohmann::json annotations;
  Index steps = 0;
};

inline RenderData make_render_data(const Trajectory& t, std::size_t max_points = 200) {
  RenderData r;
  r.annotations = t.annotations;
  r.steps = t.length();
  const auto n = static_cast<std::size_t>(t.positions.cols());
  if (n == 0) return r;
  const std::size_t m = std::min(n, max_points);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i =
        m == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(k) * (n - 1) / (m - 1)));
    r.positions.push_back({t.positions(0, static_cast<Index>(i)), t.positions(1, static_cast<Index>(i))});
  }
  return r;
}

inline nlohmann::json to_json(const RenderData& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.positions) pts.push_back({p[0], p[1]});
  return {{"positions", std::move(pts)}, {"annotations", r.annotations}, {"steps", r.steps}};
}

struct ScoreQuery {
  std::int64_t query_id = 0;
  TrajectoryId trajectory_id = 0;
  RenderData render;
  double predicted_return = 0.0;
  std::int64_t created_at = 0;  // training episode
  QueryStatus status = QueryStatus::pending;
};

// Teacher -> trainer.
struct TeacherMessage {
  enum class Kind { score, revise, skip, phase };
  Kind kind = Kind::score;
  std::int64_t query_id = -1;
  TrajectoryId trajectory_id = -1;
  double score = 0.0;
  SchedulePhase phase = SchedulePhase::fast;
};

struct ScoredView {
  TrajectoryId id = 0;
  double score = 0.0;
  double predicted_return = 0.0;
  RenderData render;
};

struct EvalPoint {
  int episode = 0;
  double mean_return = 0.0;
  double normalized = 0.0;
  double success_rate = 0.0;
};

// Immutable picture of the trainer published after every episode.
struct TrainerSnapshot {
  int episode = 0;
  SchedulePhase phase = SchedulePhase::fast;
  std::int64_t budget_used = 0;
  std::int64_t budget = 0;
  bool finished = false;
  std::vector<ScoredView> scored;
  std::vector<EvalPoint> eval_curve;
};

// The two queues and the snapshot slot connecting a trainer loop to the
// scoring service.
class HumanBridge {
 public:
  Channel<ScoreQuery> outgoing;
  Channel<TeacherMessage> incoming;

  void publish(std::shared_ptr<const TrainerSnapshot> snap) {
    std::lock_guard lock(mutex_);
    snapshot_ = std::move(snap);
  }

  std::shared_ptr<const TrainerSnapshot> snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const TrainerSnapshot> snapshot_ = std::make_shared<TrainerSnapshot>();
};

}  // namespace scorerl
