#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "support.hpp"

using namespace scorerl;

namespace {

Transition make_transition(double marker, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Transition t;
  t.s = Eigen::VectorXd::NullaryExpr(6, [&] { return u(rng); });
  t.s(0) = marker;
  t.a = Eigen::VectorXd::NullaryExpr(2, [&] { return u(rng); });
  t.s_next = t.s;
  return t;
}

// Upper 1% point of the chi-squared distribution with 9 degrees of freedom.
constexpr double kChiSquared9At001 = 21.666;

}  // namespace

TEST(ReplayBuffer, PushIntoEmptyGivesSizeOne) {
  ReplayBuffer b(4);
  Rng rng(0);
  b.push(make_transition(0, rng));
  EXPECT_EQ(b.size(), 1u);
}

TEST(ReplayBuffer, RingEvictsOldestFirst) {
  ReplayBuffer b(3);
  Rng rng(0);
  for (int k = 0; k < 5; ++k) b.push(make_transition(k, rng));
  EXPECT_EQ(b.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b.at(i).s(0), static_cast<double>(i + 2));
  std::set<double> stored;
  for (const auto& t : b) stored.insert(t.s(0));
  EXPECT_EQ(stored.count(0.0) + stored.count(1.0), 0u);
}

TEST(ReplayBuffer, SingleItemIsReturnedEveryDraw) {
  ReplayBuffer b(4);
  Rng rng(0);
  b.push(make_transition(9, rng));
  const auto s = b.sample(3, rng);
  ASSERT_EQ(s.size(), 3u);
  for (const auto* t : s) EXPECT_EQ(t->s(0), 9.0);
}

TEST(ReplayBuffer, ZeroDrawsGiveEmptyAndEmptyBufferThrows) {
  ReplayBuffer b(4);
  Rng rng(0);
  EXPECT_TRUE(b.sample(0, rng).empty());
  EXPECT_THROW(b.sample(1, rng), ValidationError);
}

TEST(ReplayBuffer, EveryStoredItemIsEventuallyDrawn) {
  ReplayBuffer b(8);
  Rng rng(1);
  for (int k = 0; k < 8; ++k) b.push(make_transition(k, rng));
  std::set<double> seen;
  for (const auto* t : b.sample(500, rng)) seen.insert(t->s(0));
  EXPECT_EQ(seen.size(), 8u);
}

TEST(ReplayBuffer, DrawsAreUniformByChiSquared) {
  ReplayBuffer b(10);
  Rng rng(2);
  for (int k = 0; k < 10; ++k) b.push(make_transition(k, rng));
  std::vector<double> counts(10, 0.0);
  const std::size_t n = 100'000;
  for (const auto* t : b.sample(n, rng)) counts[static_cast<std::size_t>(t->s(0))] += 1.0;
  const double expected = static_cast<double>(n) / 10.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, kChiSquared9At001);
}

TEST(ReplayBuffer, RelabelIsExactAndIdempotent) {
  Rng rng(3);
  RewardLearnerConfig cfg;
  cfg.hidden_units = 16;
  const auto model = RewardModel::create(6, 2, cfg, rng);
  ReplayBuffer b(50);
  for (int k = 0; k < 64; ++k) b.push(make_transition(k, rng));
  EXPECT_EQ(b.relabel_all([&](const auto& s, const auto& a) { return model(s, a); }), 50u);
  for (const auto& t : b) EXPECT_EQ(t.r_hat, model(t.s, t.a));
  std::vector<double> first;
  for (const auto& t : b) first.push_back(t.r_hat);
  b.relabel_all([&](const auto& s, const auto& a) { return model(s, a); });
  std::size_t i = 0;
  for (const auto& t : b) EXPECT_EQ(t.r_hat, first[i++]);
}

TEST(ReplayBuffer, RelabelWithDifferentNetChangesLabels) {
  Rng rng(4);
  RewardLearnerConfig cfg;
  cfg.hidden_units = 16;
  const auto model = RewardModel::create(6, 2, cfg, rng);
  auto other = model;
  other.net().layers().back().bias(0) += 0.25;
  ReplayBuffer b(20);
  for (int k = 0; k < 20; ++k) b.push(make_transition(k, rng));
  b.relabel_all([&](const auto& s, const auto& a) { return model(s, a); });
  std::vector<double> before;
  for (const auto& t : b) before.push_back(t.r_hat);
  b.relabel_all([&](const auto& s, const auto& a) { return other(s, a); });
  std::size_t changed = 0, i = 0;
  for (const auto& t : b) changed += t.r_hat != before[i++];
  EXPECT_GT(changed, 0u);
}

TEST(ScoringBuffer, ReviseUpdatesScoreAndHistory) {
  Rng rng(5);
  ScoringBuffer d;
  d.add(test::random_trajectory(1, 3, rng), 7.5, 0);
  d.revise(1, 6.0, 4);
  EXPECT_EQ(d.find(1).score, 6.0);
  ASSERT_EQ(d.find(1).history.size(), 2u);
  EXPECT_EQ(d.find(1).history[1].timestamp, 4);
}

TEST(ScoringBuffer, ErrorsForUnknownDuplicateAndOutOfRange) {
  Rng rng(6);
  ScoringBuffer d({0.0, 10.0});
  EXPECT_THROW(d.revise(3, 1.0, 0), NotFoundError);
  d.add(test::random_trajectory(3, 3, rng), 2.0, 0);
  EXPECT_THROW(d.add(test::random_trajectory(3, 3, rng), 2.0, 0), ConflictError);
  EXPECT_THROW(d.add(test::random_trajectory(4, 3, rng), 10.5, 0), ValidationError);
  EXPECT_THROW(d.revise(3, -0.5, 0), ValidationError);
  EXPECT_EQ(d.size(), 1u);
}

TEST(ScoringBuffer, HalfStepScoresAreStoredExactly) {
  Rng rng(7);
  ScoringBuffer d;
  for (int k = 0; k <= 20; ++k) d.add(test::random_trajectory(k, 2, rng), 0.5 * k, 0);
  for (int k = 0; k <= 20; ++k) EXPECT_EQ(d.find(k).score, 0.5 * k);
}

TEST(ScoringBuffer, ExportListsHistory) {
  Rng rng(8);
  ScoringBuffer d;
  d.add(test::random_trajectory(11, 4, rng), 4.0, 1);
  d.revise(11, 5.0, 2);
  std::ostringstream os;
  d.export_jsonl(os);
  const auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j["id"], 11);
  EXPECT_EQ(j["score"], 5.0);
  EXPECT_EQ(j["steps"], 4);
  EXPECT_EQ(j["score_history"].size(), 2u);
}
