#pragma once

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "scorerl/bridge.hpp"
#include "scorerl/error.hpp"

namespace scorerl {

using PointSeries = std::vector<std::array<double, 2>>;

// Dynamic time warping with Euclidean point cost and no window constraint.
inline double dtw_distance(const PointSeries& a, const PointSeries& b) {
  if (a.empty() || b.empty()) throw ValidationError("dtw_distance: empty series");
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::hypot(a[i - 1][0] - b[j - 1][0], a[i - 1][1] - b[j - 1][1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct Reference {
  TrajectoryId id = 0;
  double score = 0.0;
  double predicted_return = 0.0;
  double dtw = 0.0;
  std::string criterion;  // "return" or "dtw"
};

// Up to four scored references: two closest in predicted return, two closest
// by DTW, with duplicates removed and refilled from the next nearest.
inline std::vector<Reference> select_references(const std::vector<ScoredView>& scored,
                                                TrajectoryId query_id, double query_return,
                                                const PointSeries& query_positions,
                                                std::size_t per_criterion = 2) {
  std::vector<Reference> pool;
  for (const auto& s : scored) {
    if (s.id == query_id || s.render.positions.empty()) continue;
    pool.push_back({s.id, s.score, s.predicted_return, dtw_distance(query_positions, s.render.positions), ""});
  }
  auto by_return = pool;
  std::stable_sort(by_return.begin(), by_return.end(), [&](const Reference& x, const Reference& y) {
    const double dx = std::abs(x.predicted_return - query_return), dy = std::abs(y.predicted_return - query_return);
    return dx != dy ? dx < dy : x.id < y.id;
  });
  auto by_dtw = pool;
  std::stable_sort(by_dtw.begin(), by_dtw.end(), [](const Reference& x, const Reference& y) {
    return x.dtw != y.dtw ? x.dtw < y.dtw : x.id < y.id;
  });

  std::vector<Reference> out;
  std::set<TrajectoryId> taken;
  auto take = [&](const std::vector<Reference>& ranked, const char* criterion) {
    std::size_t got = 0;
    for (const auto& r : ranked) {
      if (got == per_criterion) break;
      if (!taken.insert(r.id).second) continue;
      out.push_back(r);
      out.back().criterion = criterion;
      ++got;
    }
  };
  take(by_return, "return");
  take(by_dtw, "dtw");
  return out;
}

// HTTP-independent request handling. Results carry an HTTP status code and a
// JSON body so the same logic is testable without a socket.
class ServiceCore {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  ServiceCore(HumanBridge& bridge, ScoreRange range) : bridge_(bridge), range_(range) {}

  Response queries() {
    std::lock_guard lock(mutex_);
    absorb();
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [id, q] : queries_)
      if (q.status == QueryStatus::pending) list.push_back(query_json(q));
    return {200, list};
  }

  Response trajectory(TrajectoryId id) {
    std::lock_guard lock(mutex_);
    absorb();
    if (const auto* q = find_query_by_trajectory(id)) return {200, to_json(q->render)};
    const auto snap = bridge_.snapshot();
    for (const auto& s : snap->scored)
      if (s.id == id) return {200, to_json(s.render)};
    return error(404, "unknown trajectory " + std::to_string(id));
  }

  Response references(TrajectoryId id) {
    std::lock_guard lock(mutex_);
    absorb();
    const auto snap = bridge_.snapshot();
    const RenderData* render = nullptr;
    double predicted = 0.0;
    if (const auto* q = find_query_by_trajectory(id)) {
      render = &q->render;
      predicted = q->predicted_return;
    } else {
      for (const auto& s : snap->scored)
        if (s.id == id) {
          render = &s.render;
          predicted = s.predicted_return;
        }
    }
    if (render == nullptr) return error(404, "unknown trajectory " + std::to_string(id));
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : select_references(snap->scored, id, predicted, render->positions)) {
      list.push_back({{"trajectory_id", r.id},
                      {"score", current_score(r.id, r.score)},
                      {"predicted_return", r.predicted_return},
                      {"dtw", r.dtw},
                      {"criterion", r.criterion}});
    }
    return {200, {{"trajectory_id", id}, {"references", list}}};
  }

  Response score(const nlohmann::json& body) {
    std::lock_guard lock(mutex_);
    absorb();
    if (!body.is_object() || !body.contains("query_id") || !body.contains("score") ||
        !body["query_id"].is_number_integer() || !body["score"].is_number())
      return error(422, "expected {query_id: int, score: number}");
    const auto qid = body["query_id"].get<std::int64_t>();
    const double s = body["score"].get<double>();
    auto it = queries_.find(qid);
    if (it == queries_.end()) return error(404, "unknown query " + std::to_string(qid));
    if (!range_.contains(s)) return error(422, "score out of range");
    if (it->second.status != QueryStatus::pending) return error(409, "query is not pending");
    it->second.status = QueryStatus::scored;
    scores_[it->second.trajectory_id] = s;
    TeacherMessage m;
    m.kind = TeacherMessage::Kind::score;
    m.query_id = qid;
    m.trajectory_id = it->second.trajectory_id;
    m.score = s;
    bridge_.incoming.push(m);
    return {200, {{"ok", true}, {"query_id", qid}, {"status", "scored"}}};
  }

  Response revise(TrajectoryId id, const nlohmann::json& body) {
    std::lock_guard lock(mutex_);
    absorb();
    if (!body.is_object() || !body.contains("score") || !body["score"].is_number())
      return error(422, "expected {score: number}");
    const double s = body["score"].get<double>();
    if (!is_scored(id)) return error(404, "trajectory " + std::to_string(id) + " has no score");
    if (!range_.contains(s)) return error(422, "score out of range");
    scores_[id] = s;
    TeacherMessage m;
    m.kind = TeacherMessage::Kind::revise;
    m.trajectory_id = id;
    m.score = s;
    bridge_.incoming.push(m);
    return {200, {{"ok", true}, {"trajectory_id", id}, {"score", s}}};
  }

  Response skip(std::int64_t qid) {
    std::lock_guard lock(mutex_);
    absorb();
    auto it = queries_.find(qid);
    if (it == queries_.end()) return error(404, "unknown query " + std::to_string(qid));
    if (it->second.status != QueryStatus::pending) return error(409, "query is not pending");
    it->second.status = QueryStatus::skipped;
    TeacherMessage m;
    m.kind = TeacherMessage::Kind::skip;
    m.query_id = qid;
    m.trajectory_id = it->second.trajectory_id;
    bridge_.incoming.push(m);
    return {200, {{"ok", true}, {"query_id", qid}, {"status", "skipped"}}};
  }

  Response status() {
    std::lock_guard lock(mutex_);
    absorb();
    const auto snap = bridge_.snapshot();
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : snap->eval_curve)
      curve.push_back({{"episode", e.episode},
                       {"return", e.mean_return},
                       {"normalized_return", e.normalized},
                       {"success_rate", e.success_rate}});
    std::size_t pending = 0;
    for (const auto& [id, q] : queries_) pending += q.status == QueryStatus::pending ? 1 : 0;
    return {200,
            {{"episode", snap->episode},
             {"phase", to_string(snap->phase)},
             {"scored", snap->scored.size()},
             {"budget_used", snap->budget_used},
             {"budget", snap->budget},
             {"pending", pending},
             {"finished", snap->finished},
             {"scoring_range", {range_.lo, range_.hi}},
             {"eval_curve", curve}}};
  }

  Response phase(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("phase") || !body["phase"].is_string())
      return error(422, "expected {phase: \"fast\"|\"slow\"}");
    TeacherMessage m;
    m.kind = TeacherMessage::Kind::phase;
    try {
      m.phase = phase_from_string(body["phase"].get<std::string>());
    } catch (const ValidationError& e) {
      return error(422, e.what());
    }
    bridge_.incoming.push(m);
    return {200, {{"ok", true}, {"phase", to_string(m.phase)}}};
  }

 private:
  static Response error(int status, const std::string& message) { return {status, {{"error", message}}}; }

  // Pull newly posted queries out of the trainer's outgoing queue.
  void absorb() {
    for (auto& q : bridge_.outgoing.drain()) queries_.emplace(q.query_id, std::move(q));
  }

  const ScoreQuery* find_query_by_trajectory(TrajectoryId id) const {
    for (const auto& [qid, q] : queries_)
      if (q.trajectory_id == id) return &q;
    return nullptr;
  }

  bool is_scored(TrajectoryId id) const {
    if (scores_.count(id)) return true;
    const auto snap = bridge_.snapshot();
    return std::any_of(snap->scored.begin(), snap->scored.end(), [&](const ScoredView& s) { return s.id == id; });
  }

  // Scores submitted here may be newer than the trainer's last snapshot.
  double current_score(TrajectoryId id, double snapshot_score) const {
    const auto it = scores_.find(id);
    return it == scores_.end() ? snapshot_score : it->second;
  }

  static nlohmann::json query_json(const ScoreQuery& q) {
    return {{"query_id", q.query_id},
            {"trajectory_id", q.trajectory_id},
            {"predicted_return", q.predicted_return},
            {"created_at", q.created_at},
            {"status", to_string(q.status)},
            {"render", to_json(q.render)}};
  }

  HumanBridge& bridge_;
  ScoreRange range_;
  std::mutex mutex_;
  std::map<std::int64_t, ScoreQuery> queries_;
  std::map<TrajectoryId, double> scores_;
};

// Thin cpp-httplib front end over ServiceCore.
class ScoringServer {
 public:
  ScoringServer(HumanBridge& bridge, ScoreRange range, std::string static_dir = {})
      : core_(bridge, range) {
    using httplib::Request;
    using httplib::Response;
    auto reply = [](Response& res, const ServiceCore::Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const Request& req) {
      return nlohmann::json::parse(req.body, nullptr, false);
    };
    auto id_at = [](const Request& req, std::size_t k) { return std::stoll(req.matches[k].str()); };

    server_.Get("/api/queries", [=, this](const Request&, Response& res) { reply(res, core_.queries()); });
    server_.Get(R"(/api/trajectories/(-?\d+))", [=, this](const Request& req, Response& res) {
      reply(res, core_.trajectory(id_at(req, 1)));
    });
    server_.Get(R"(/api/references/(-?\d+))", [=, this](const Request& req, Response& res) {
      reply(res, core_.references(id_at(req, 1)));
    });
    server_.Post("/api/scores", [=, this](const Request& req, Response& res) {
      reply(res, core_.score(parse(req)));
    });
    server_.Post(R"(/api/scores/(-?\d+)/revise)", [=, this](const Request& req, Response& res) {
      reply(res, core_.revise(id_at(req, 1), parse(req)));
    });
    server_.Post(R"(/api/queries/(-?\d+)/skip)", [=, this](const Request& req, Response& res) {
      reply(res, core_.skip(id_at(req, 1)));
    });
    server_.Get("/api/status", [=, this](const Request&, Response& res) { reply(res, core_.status()); });
    server_.Post("/api/phase", [=, this](const Request& req, Response& res) {
      reply(res, core_.phase(parse(req)));
    });
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir);
  }

  ScoringServer(const ScoringServer&) = delete;
  ScoringServer& operator=(const ScoringServer&) = delete;
  ~ScoringServer() { stop(); }

  ServiceCore& core() { return core_; }

  // Starts listening on a background thread. Port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 8080) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

 private:
  ServiceCore core_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace scorerl
