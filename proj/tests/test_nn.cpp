#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace scorerl;
using scorerl::test::central_difference;
using scorerl::test::relative_error;

namespace {

DenseNet single_layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation a) {
  return DenseNet({DenseLayer{std::move(w), std::move(b), a}});
}

}  // namespace

TEST(DenseNet, IdentityLayerPassesInputThrough) {
  auto net = single_layer(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), Activation::identity);
  EXPECT_EQ(net.forward(Eigen::Vector2d(1.0, 2.0)), Eigen::Vector2d(1.0, 2.0));
}

TEST(DenseNet, LeakyReluUsesSlopeOneHundredth) {
  auto net = single_layer(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), Activation::leaky_relu);
  const Eigen::VectorXd y = net.forward(Eigen::Vector2d(-1.0, 2.0));
  EXPECT_DOUBLE_EQ(y(0), -0.01);
  EXPECT_DOUBLE_EQ(y(1), 2.0);
}

TEST(DenseNet, TwoLayerForwardMatchesHandComputedChain) {
  Rng rng(0);
  const auto net = DenseNet::mlp(3, {4}, 2, Activation::tanh, Activation::identity, rng);
  const Eigen::Vector3d x(0.3, -0.7, 1.1);
  const auto& l = net.layers();
  // Straight element-by-element arithmetic, no Eigen products.
  std::vector<double> hidden(4);
  for (int i = 0; i < 4; ++i) {
    double z = l[0].bias(i);
    for (int j = 0; j < 3; ++j) z += l[0].weight(i, j) * x(j);
    hidden[static_cast<std::size_t>(i)] = std::tanh(z);
  }
  const Eigen::VectorXd y = net.forward(x);
  for (int i = 0; i < 2; ++i) {
    double z = l[1].bias(i);
    for (int j = 0; j < 4; ++j) z += l[1].weight(i, j) * hidden[static_cast<std::size_t>(j)];
    EXPECT_NEAR(y(i), z, 1e-14);
  }
}

TEST(DenseNet, InitialisationIsUniformInFanInBound) {
  Rng rng(3);
  const auto net = DenseNet::mlp(9, {16, 25}, 4, Activation::relu, Activation::identity, rng);
  for (const auto& layer : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(layer.bias.cwiseAbs().maxCoeff(), bound);
  }
}

TEST(DenseNet, SameSeedGivesIdenticalNetworks) {
  Rng a(11), b(11);
  EXPECT_TRUE(DenseNet::mlp(5, {7, 7}, 1, Activation::leaky_relu, Activation::tanh, a) ==
              DenseNet::mlp(5, {7, 7}, 1, Activation::leaky_relu, Activation::tanh, b));
}

TEST(DenseNet, RejectsNonChainingLayers) {
  std::vector<DenseLayer> layers{{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), Activation::relu},
                                 {Eigen::MatrixXd::Zero(1, 4), Eigen::VectorXd::Zero(1), Activation::identity}};
  EXPECT_THROW(DenseNet{layers}, ValidationError);
}

TEST(DenseNet, ForwardRejectsWrongInputSize) {
  Rng rng(0);
  const auto net = DenseNet::mlp(3, {4}, 1, Activation::relu, Activation::identity, rng);
  EXPECT_THROW(net.forward(Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST(DenseNet, ForwardIsPure) {
  Rng rng(5);
  const auto net = DenseNet::mlp(4, {8}, 3, Activation::leaky_relu, Activation::tanh, rng);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0);
  EXPECT_EQ(net.forward(x), net.forward(x));
}

TEST(DenseNet, BatchForwardMatchesColumnwiseForward) {
  Rng rng(6);
  const auto net = DenseNet::mlp(4, {8, 8}, 2, Activation::leaky_relu, Activation::identity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
  const Eigen::MatrixXd y = net.forward_batch(x);
  for (Index k = 0; k < x.cols(); ++k)
    EXPECT_LT((y.col(k) - net.forward(x.col(k))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, LinearLayerWeightGradientIsUpstreamTimesInput) {
  Rng rng(1);
  auto net = DenseNet::mlp(3, {}, 2, Activation::relu, Activation::identity, rng);
  const Eigen::Vector3d x(1.0, -2.0, 0.5);
  const Eigen::Vector2d up(0.3, -1.5);
  const auto g = net.backward(x, up);
  EXPECT_LT((g.params.weight[0] - up * x.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(g.params.bias[0], Eigen::VectorXd(up));
  EXPECT_LT((g.input - net.layers()[0].weight.transpose() * up).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  const auto net = DenseNet::mlp(4, {6, 6}, 2, Activation::leaky_relu, Activation::tanh, rng);
  const auto g = net.backward(Eigen::VectorXd::Random(4), Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(g.params.all_zero());
}

class BackwardFiniteDifference : public ::testing::TestWithParam<Activation> {};

TEST_P(BackwardFiniteDifference, MatchesCentralDifferencesOnRandomCoordinates) {
  Rng rng(42);
  auto net = DenseNet::mlp(5, {12, 10}, 3, GetParam(), Activation::tanh, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 6);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 6);
  auto loss = [&] { return (net.forward_batch(x).array() * w.array()).sum(); };
  const auto grads = net.backward(net.forward_cached(x), w).params;
  ASSERT_EQ(grads.size(), net.parameter_count());

  std::uniform_int_distribution<std::size_t> pick(0, net.parameter_count() - 1);
  int checked = 0;
  double worst = 0.0;
  // ReLU zeroes whole units, so draw enough coordinates to keep 100 live ones.
  for (int k = 0; k < 300; ++k) {
    const auto i = pick(rng);
    const double fd = central_difference(net, i, loss);
    if (std::abs(fd) < 1e-7 && std::abs(grads.flat(i)) < 1e-7) continue;
    worst = std::max(worst, relative_error(grads.flat(i), fd));
    ++checked;
  }
  EXPECT_GE(checked, 100);
  EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Activations, BackwardFiniteDifference,
                         ::testing::Values(Activation::tanh, Activation::leaky_relu, Activation::relu),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Backward, InputGradientMatchesCentralDifferences) {
  Rng rng(8);
  const auto net = DenseNet::mlp(4, {9}, 2, Activation::tanh, Activation::identity, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Random(4);
  const Eigen::Vector2d up(0.7, -0.4);
  const auto g = net.backward(x, up);
  for (Index d = 0; d < 4; ++d) {
    const double h = 1e-6, saved = x(d);
    x(d) = saved + h;
    const double a = up.dot(net.forward(x));
    x(d) = saved - h;
    const double b = up.dot(net.forward(x));
    x(d) = saved;
    EXPECT_LT(relative_error(g.input(d), (a - b) / (2 * h)), 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(0);
  auto net = DenseNet::mlp(3, {4}, 1, Activation::relu, Activation::identity, rng);
  const auto before = net;
  auto state = make_adam_state(net);
  adam_step(net, net.zero_like(), state);
  EXPECT_TRUE(net == before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto net = single_layer(Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Zero(1), Activation::identity);
  auto state = make_adam_state(net, AdamConfig{0.001});
  auto g = net.zero_like();
  g.weight[0](0, 0) = 1.0;
  adam_step(net, g, state);
  // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
  EXPECT_NEAR(0.5 - net.layers()[0].weight(0, 0), 0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_DOUBLE_EQ(net.layers()[0].bias(0), 0.0);
}

TEST(Adam, TwoStepsMatchScalarOracle) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1 = 0.8, g2 = -0.3;
  // Hand-rolled trace.
  double p = 1.0, m = 0.0, v = 0.0;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    p -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }

  auto net = single_layer(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1), Activation::identity);
  auto state = make_adam_state(net, AdamConfig{lr, b1, b2, eps});
  ScalarAdam scalar{AdamConfig{lr, b1, b2, eps}};
  double q = 1.0;
  for (double g : {g1, g2}) {
    auto grads = net.zero_like();
    grads.weight[0](0, 0) = g;
    adam_step(net, grads, state);
    scalar.step(q, g);
  }
  EXPECT_NEAR(net.layers()[0].weight(0, 0), p, 1e-15);
  EXPECT_NEAR(q, p, 1e-15);
}

TEST(Adam, NonFiniteGradientThrowsAndLeavesStateUntouched) {
  Rng rng(4);
  auto net = DenseNet::mlp(2, {3}, 1, Activation::relu, Activation::identity, rng);
  auto state = make_adam_state(net);
  auto g = net.zero_like();
  g.bias[1](0) = std::numeric_limits<double>::quiet_NaN();
  const auto before = net;
  try {
    adam_step(net, g, state, "unit");
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.source(), "unit");
  }
  EXPECT_TRUE(net == before);
  EXPECT_EQ(state.step_count, 0);
}

TEST(Adam, UpdateTraceIsDeterministic) {
  auto run = [] {
    Rng rng(9);
    auto net = DenseNet::mlp(3, {5}, 1, Activation::leaky_relu, Activation::identity, rng);
    auto state = make_adam_state(net);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return u(rng); });
    for (int k = 0; k < 5; ++k)
      adam_step(net, net.backward(net.forward_cached(x), Eigen::MatrixXd::Ones(1, 4)).params, state);
    return net;
  };
  EXPECT_TRUE(run() == run());
}

TEST(NetJson, RoundTripIsExact) {
  Rng rng(12);
  const auto net = DenseNet::mlp(4, {6, 5}, 2, Activation::leaky_relu, Activation::tanh, rng);
  const auto j = to_json(net);
  EXPECT_TRUE(j.contains("layer_0"));
  EXPECT_EQ(j["layer_0"]["W"].size(), 24u);
  const auto back = dense_net_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back == net);
}

TEST(NetJson, WeightsAreRowMajor) {
  Eigen::MatrixXd w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  const auto j = to_json(single_layer(w, Eigen::Vector2d(7, 8), Activation::identity));
  EXPECT_EQ(j["layer_0"]["W"], nlohmann::json({1, 2, 3, 4, 5, 6}));
}
