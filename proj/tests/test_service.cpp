#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace scorerl;

namespace {

ScoredView view(TrajectoryId id, double score, double predicted, PointSeries positions) {
  ScoredView v;
  v.id = id;
  v.score = score;
  v.predicted_return = predicted;
  v.render.positions = std::move(positions);
  v.render.steps = static_cast<Index>(v.render.positions.size()) - 1;
  return v;
}

PointSeries line(double y, int n = 5) {
  PointSeries p;
  for (int k = 0; k < n; ++k) p.push_back({0.1 * k, y});
  return p;
}

ScoreQuery make_query(std::int64_t qid, TrajectoryId tid, double predicted) {
  ScoreQuery q;
  q.query_id = qid;
  q.trajectory_id = tid;
  q.predicted_return = predicted;
  q.render.positions = line(0.0);
  return q;
}

void publish_scored(HumanBridge& bridge, std::vector<ScoredView> scored) {
  auto snap = std::make_shared<TrainerSnapshot>();
  snap->scored = std::move(scored);
  bridge.publish(std::move(snap));
}

}  // namespace

TEST(Dtw, IdenticalSeriesCostNothing) {
  const PointSeries a{{0, 0}, {0.5, 0.2}, {1, 1}};
  EXPECT_EQ(dtw_distance(a, a), 0.0);
}

TEST(Dtw, WarpAbsorbsRepeatedPoint) {
  EXPECT_EQ(dtw_distance({{0, 0}, {1, 0}}, {{0, 0}, {0, 0}, {1, 0}}), 0.0);
}

TEST(Dtw, HandFilledTable) {
  // Single point against two: both must match it, 1 + 2.
  EXPECT_DOUBLE_EQ(dtw_distance({{0, 0}}, {{1, 0}, {2, 0}}), 3.0);
  // 3-4-5 triangle cost on one step.
  EXPECT_DOUBLE_EQ(dtw_distance({{0, 0}}, {{3, 4}}), 5.0);
}

TEST(Dtw, SymmetricOnRandomSeries) {
  Rng rng(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 30);
  for (int k = 0; k < 100; ++k) {
    PointSeries a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& p : a) p = {u(rng), u(rng)};
    for (auto& p : b) p = {u(rng), u(rng)};
    EXPECT_EQ(dtw_distance(a, b), dtw_distance(b, a));
    EXPECT_GE(dtw_distance(a, b), 0.0);
    EXPECT_EQ(dtw_distance(a, a), 0.0);
  }
}

TEST(Dtw, EmptySeriesIsRejected) { EXPECT_THROW(dtw_distance({}, {{0, 0}}), ValidationError); }

TEST(References, TwoByReturnPlusTwoByShape) {
  // Returns close to 0 belong to ids 1, 2; shapes close to y=0 belong to ids 3, 4.
  std::vector<ScoredView> scored{view(1, 5.0, 0.1, line(0.9)), view(2, 6.0, -0.2, line(0.8)),
                                 view(3, 2.0, 9.0, line(0.01)), view(4, 3.0, 8.0, line(0.02)),
                                 view(5, 4.0, 20.0, line(0.5))};
  const auto refs = select_references(scored, 99, 0.0, line(0.0));
  ASSERT_EQ(refs.size(), 4u);
  EXPECT_EQ(refs[0].id, 1);
  EXPECT_EQ(refs[1].id, 2);
  EXPECT_EQ(refs[0].criterion, "return");
  EXPECT_EQ(refs[2].id, 3);
  EXPECT_EQ(refs[3].id, 4);
  EXPECT_EQ(refs[3].criterion, "dtw");
}

TEST(References, DuplicatesAreBackfilledByNextNearest) {
  // ids 1 and 2 win both criteria, so the shape slots fall to 3 and 4.
  std::vector<ScoredView> scored{view(1, 5.0, 0.1, line(0.01)), view(2, 6.0, 0.2, line(0.02)),
                                 view(3, 2.0, 9.0, line(0.3)), view(4, 3.0, 8.0, line(0.4)),
                                 view(5, 4.0, 20.0, line(0.9))};
  const auto refs = select_references(scored, 99, 0.0, line(0.0));
  std::vector<TrajectoryId> ids;
  for (const auto& r : refs) ids.push_back(r.id);
  EXPECT_EQ(ids, (std::vector<TrajectoryId>{1, 2, 3, 4}));
}

TEST(References, SmallBufferReturnsEverythingButSelf) {
  std::vector<ScoredView> scored{view(1, 5.0, 0.1, line(0.1)), view(2, 6.0, 0.2, line(0.2)),
                                 view(3, 2.0, 9.0, line(0.3))};
  EXPECT_EQ(select_references(scored, 99, 0.0, line(0.0)).size(), 3u);
  const auto without_self = select_references(scored, 2, 0.2, line(0.2));
  EXPECT_EQ(without_self.size(), 2u);
  for (const auto& r : without_self) EXPECT_NE(r.id, 2);
}

TEST(ServiceCore, ScoringMovesQueryOutOfPendingList) {
  HumanBridge bridge;
  ServiceCore core(bridge, {0.0, 10.0});
  bridge.outgoing.push(make_query(0, 10, 1.0));
  bridge.outgoing.push(make_query(1, 11, 2.0));
  EXPECT_EQ(core.queries().body.size(), 2u);

  const auto r = core.score({{"query_id", 0}, {"score", 7.5}});
  EXPECT_EQ(r.status, 200);
  const auto pending = core.queries().body;
  ASSERT_EQ(pending.size(), 1u);
  EXPECT_EQ(pending[0]["query_id"], 1);

  const auto msgs = bridge.incoming.drain();
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].kind, TeacherMessage::Kind::score);
  EXPECT_EQ(msgs[0].trajectory_id, 10);
  EXPECT_EQ(msgs[0].score, 7.5);
}

TEST(ServiceCore, ErrorStatusCodes) {
  HumanBridge bridge;
  ServiceCore core(bridge, {0.0, 10.0});
  bridge.outgoing.push(make_query(0, 10, 1.0));
  EXPECT_EQ(core.score({{"query_id", 0}, {"score", 13}}).status, 422);
  EXPECT_EQ(core.score({{"query_id", 0}}).status, 422);
  EXPECT_EQ(core.score({{"query_id", 5}, {"score", 3}}).status, 404);
  EXPECT_EQ(core.score({{"query_id", 0}, {"score", 3}}).status, 200);
  EXPECT_EQ(core.score({{"query_id", 0}, {"score", 4}}).status, 409);
  EXPECT_EQ(core.skip(0).status, 409);
  EXPECT_EQ(core.skip(7).status, 404);
  EXPECT_EQ(core.revise(42, {{"score", 3}}).status, 404);
  EXPECT_EQ(core.revise(10, {{"score", -1}}).status, 422);
  EXPECT_EQ(core.trajectory(42).status, 404);
  EXPECT_EQ(core.references(42).status, 404);
  EXPECT_EQ(core.phase({{"phase", "medium"}}).status, 422);
}

TEST(ServiceCore, SkipAndPhaseAreForwarded) {
  HumanBridge bridge;
  ServiceCore core(bridge, {0.0, 10.0});
  bridge.outgoing.push(make_query(3, 30, 1.0));
  EXPECT_EQ(core.skip(3).status, 200);
  EXPECT_TRUE(core.queries().body.empty());
  EXPECT_EQ(core.phase({{"phase", "slow"}}).status, 200);
  const auto msgs = bridge.incoming.drain();
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].kind, TeacherMessage::Kind::skip);
  EXPECT_EQ(msgs[1].kind, TeacherMessage::Kind::phase);
  EXPECT_EQ(msgs[1].phase, SchedulePhase::slow);
}

TEST(ServiceCore, ReferencesComeFromSnapshotWithCurrentScores) {
  HumanBridge bridge;
  ServiceCore core(bridge, {0.0, 10.0});
  publish_scored(bridge, {view(1, 5.0, 0.1, line(0.1)), view(2, 6.0, 0.2, line(0.2)),
                          view(3, 2.0, 9.0, line(0.3)), view(4, 4.0, 3.0, line(0.05))});
  bridge.outgoing.push(make_query(0, 50, 0.0));
  EXPECT_EQ(core.revise(4, {{"score", 5.0}}).status, 200);
  const auto r = core.references(50);
  ASSERT_EQ(r.status, 200);
  const auto& refs = r.body["references"];
  EXPECT_EQ(refs.size(), 4u);
  int by_return = 0, by_dtw = 0;
  for (const auto& ref : refs) {
    by_return += ref["criterion"] == "return";
    by_dtw += ref["criterion"] == "dtw";
    if (ref["trajectory_id"] == 4) {
      EXPECT_EQ(ref["score"], 5.0);
    }
  }
  EXPECT_EQ(by_return, 2);
  EXPECT_EQ(by_dtw, 2);
  EXPECT_EQ(core.trajectory(3).status, 200);
  EXPECT_EQ(core.status().body["scored"], 4);
}

TEST(ScoringServer, HttpRoundTrip) {
  HumanBridge bridge;
  ScoringServer server(bridge, {0.0, 10.0});
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  bridge.outgoing.push(make_query(0, 10, 1.0));
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/api/queries");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).size(), 1u);

  res = client.Post("/api/scores", R"({"query_id": 0, "score": 13})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  res = client.Post("/api/scores", R"({"query_id": 0, "score": 7.5})", "application/json");
  EXPECT_EQ(res->status, 200);
  res = client.Post("/api/queries/0/skip", "", "application/json");
  EXPECT_EQ(res->status, 409);
  res = client.Post("/api/scores/10/revise", R"({"score": 5})", "application/json");
  EXPECT_EQ(res->status, 200);
  res = client.Get("/api/trajectories/10");
  EXPECT_EQ(res->status, 200);
  res = client.Get("/api/references/10");
  EXPECT_EQ(res->status, 200);
  res = client.Post("/api/phase", R"({"phase": "slow"})", "application/json");
  EXPECT_EQ(res->status, 200);
  res = client.Get("/api/status");
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body)["phase"], "fast");
  server.stop();
  EXPECT_EQ(bridge.incoming.drain().size(), 3u);
}
