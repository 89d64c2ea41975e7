#include <gtest/gtest.h>

#include "support.hpp"

using namespace scorerl;

namespace {

// Linear reward model r = w * s_0 + b with identity output.
RewardModel linear_model(double w, double b) {
  DenseLayer l{Eigen::MatrixXd::Zero(1, 8), Eigen::VectorXd::Constant(1, b), Activation::identity};
  l.weight(0, 0) = w;
  return RewardModel(DenseNet({l}), RewardInput::state_action);
}

std::vector<TrajectoryPtr> level_set(Rng& rng) {
  std::vector<TrajectoryPtr> out;
  for (int k = 0; k < 12; ++k) out.push_back(test::level_trajectory(k, -1.0 + 0.17 * k, 10, rng));
  return out;
}

}  // namespace

TEST(Metrics, PerfectPredictionGivesUnitStatistics) {
  Rng rng(0);
  const auto r = return_correlation(linear_model(1.0, 0.0), level_set(rng));
  EXPECT_NEAR(r.pearson_r, 1.0, 1e-12);
  EXPECT_EQ(r.kendall.tau_b, 1.0);
  EXPECT_NEAR(r.scale, 1.0, 1e-12);
  EXPECT_TRUE(r.defined);
}

TEST(Metrics, DoubledPredictionHalvesScale) {
  Rng rng(1);
  const auto r = return_correlation(linear_model(2.0, 0.0), level_set(rng));
  EXPECT_NEAR(r.pearson_r, 1.0, 1e-12);
  EXPECT_NEAR(r.scale, 0.5, 1e-12);
}

TEST(Metrics, ScaleIsClosedFormLeastSquares) {
  const std::vector<double> p{1.0, -2.0, 0.5}, t{2.0, -3.0, 2.0};
  EXPECT_DOUBLE_EQ(least_squares_scale(p, t), (2.0 + 6.0 + 1.0) / (1.0 + 4.0 + 0.25));
}

TEST(Metrics, PearsonUndefinedForConstantSeries) {
  EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
}

TEST(Metrics, ConstantNetGivesFlatAlignedSeries) {
  Rng rng(2);
  const auto model = linear_model(0.0, 0.4);
  const auto t = test::random_trajectory(0, 9, rng);
  const auto s = stepwise_alignment(model, *t, 2.0);
  ASSERT_EQ(s.size(), 9u);
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_NEAR(s[k].scaled_prediction, 0.8, 1e-15);
    EXPECT_EQ(s[k].truth, t->true_rewards[k]);
  }
}

TEST(Metrics, CorrelationDoesNotMutateModel) {
  Rng rng(3);
  RewardLearnerConfig cfg;
  cfg.hidden_units = 8;
  const auto model = RewardModel::create(6, 2, cfg, rng);
  const auto before = model.net();
  std::vector<TrajectoryPtr> set;
  for (int k = 0; k < 5; ++k) set.push_back(test::random_trajectory(k, 6, rng));
  return_correlation(model, set);
  EXPECT_TRUE(model.net() == before);
}

TEST(Metrics, StepwiseErrorOfPerfectModelIsZero) {
  Rng rng(4);
  const auto set = level_set(rng);
  const auto e = stepwise_error(linear_model(3.0, 0.0), set, 1.0 / 3.0);
  EXPECT_NEAR(e.mae, 0.0, 1e-12);
  EXPECT_GT(e.true_reward_std, 0.0);
}

TEST(Analysis, QualitySpanningSetCoversRandomToExpert) {
  PointGoal env(50);
  const auto set = quality_spanning_set(env, 5, 1);
  ASSERT_EQ(set.size(), 30u);
  double expert = 0.0, random = 0.0;
  for (int k = 0; k < 5; ++k) {
    expert += set[static_cast<std::size_t>(k)]->true_return;
    random += set[static_cast<std::size_t>(25 + k)]->true_return;
  }
  EXPECT_GT(expert, random);
}
