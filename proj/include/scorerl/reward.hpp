#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/error.hpp"
#include "scorerl/nn.hpp"

namespace scorerl {

enum class RewardInput { state_action, state };

// How the hard preference label is softened before the cross entropy.
enum class LabelMode {
  adaptive,  // alpha = 1 / (|s_i - s_j| + lambda)^2
  constant,  // fixed alpha
  hard,      // alpha = 0
};

inline std::string_view to_string(LabelMode m) {
  switch (m) {
    case LabelMode::adaptive: return "adaptive";
    case LabelMode::constant: return "constant";
    case LabelMode::hard: return "hard";
  }
  return "adaptive";
}

inline LabelMode label_mode_from_string(std::string_view s) {
  if (s == "adaptive") return LabelMode::adaptive;
  if (s == "constant") return LabelMode::constant;
  if (s == "hard") return LabelMode::hard;
  throw ValidationError("unknown label mode '" + std::string(s) + "'");
}

struct RewardLearnerConfig {
  double learning_rate = 1e-3;
  int hidden_layers = 3;
  int hidden_units = 256;
  int batch_size = 128;
  Activation activation = Activation::leaky_relu;
  Activation output_activation = Activation::tanh;
  double lambda = 2.0;         // adaptive smoothing coefficient, must exceed 1
  double tie_threshold = 0.2;  // |s_i - s_j| below this is a tie
  int num_labels = 2;
  ScoreRange scoring_range{0.0, 10.0};
  LabelMode label_mode = LabelMode::adaptive;
  double constant_alpha = 0.05;
  RewardInput input = RewardInput::state_action;

  void validate() const {
    if (!(lambda > 1.0)) throw ValidationError("lambda must be > 1");
    if (tie_threshold < 0.0) throw ValidationError("tie_threshold must be >= 0");
    if (num_labels < 2) throw ValidationError("num_labels must be >= 2");
    if (batch_size <= 0 || hidden_units <= 0 || hidden_layers < 0)
      throw ValidationError("reward network sizes must be positive");
    if (!(scoring_range.lo < scoring_range.hi)) throw ValidationError("bad scoring range");
    if (constant_alpha < 0.0 || constant_alpha > 1.0)
      throw ValidationError("constant_alpha must be in [0, 1]");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  }
};

// r_hat(s, a) as a dense network over the concatenated input.
class RewardModel {
 public:
  RewardModel() = default;
  RewardModel(DenseNet net, RewardInput input) : net_(std::move(net)), input_(input) {}

  static RewardModel create(Index state_dim, Index action_dim, const RewardLearnerConfig& cfg,
                            Rng& rng) {
    const Index in = cfg.input == RewardInput::state_action ? state_dim + action_dim : state_dim;
    std::vector<Index> hidden(static_cast<std::size_t>(cfg.hidden_layers), cfg.hidden_units);
    return RewardModel(
        DenseNet::mlp(in, hidden, 1, cfg.activation, cfg.output_activation, rng), cfg.input);
  }

  const DenseNet& net() const { return net_; }
  DenseNet& net() { return net_; }
  RewardInput input() const { return input_; }

  // Canonical single-transition evaluation. Relabeling and reward generation
  // both go through here so stored values are bit-identical to it.
  double operator()(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    if (input_ == RewardInput::state) return net_.forward(s)(0);
    Eigen::VectorXd x(s.size() + a.size());
    x << s, a;
    return net_.forward(x)(0);
  }

  Eigen::MatrixXd features(const Trajectory& traj) const {
    if (input_ == RewardInput::state) return traj.states;
    Eigen::MatrixXd x(traj.states.rows() + traj.actions.rows(), traj.length());
    x << traj.states, traj.actions;
    return x;
  }

  Eigen::VectorXd step_rewards(const Trajectory& traj) const {
    return net_.forward_batch(features(traj)).row(0).transpose();
  }

  double predicted_return(const Trajectory& traj) const {
    if (traj.length() == 0) throw ValidationError("predicted_return: empty trajectory");
    return step_rewards(traj).sum();
  }

 private:
  DenseNet net_;
  RewardInput input_ = RewardInput::state_action;
};

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

// P(traj_i < traj_j): probability that j is preferred, a logistic of the
// return difference.
inline double preference_probability(double return_i, double return_j) {
  return logistic(return_j - return_i);
}

inline double preference_probability(const RewardModel& model, const Trajectory& ti,
                                     const Trajectory& tj) {
  return preference_probability(model.predicted_return(ti), model.predicted_return(tj));
}

struct SoftLabel {
  double mu = 0.5;
  double mu_tilde = 0.5;
};

inline double smoothing_strength(double gap, const RewardLearnerConfig& cfg) {
  switch (cfg.label_mode) {
    case LabelMode::adaptive: {
      const double d = gap + cfg.lambda;
      return 1.0 / (d * d);
    }
    case LabelMode::constant: return cfg.constant_alpha;
    case LabelMode::hard: return 0.0;
  }
  return 0.0;
}

// mu = 1 when j scored higher, 0 when i did, 0.5 inside the tie threshold;
// mu_tilde = (1 - alpha) mu + alpha / K.
inline SoftLabel soft_label(double score_i, double score_j, const RewardLearnerConfig& cfg) {
  const double gap = std::abs(score_i - score_j);
  SoftLabel out;
  out.mu = gap < cfg.tie_threshold ? 0.5 : (score_i < score_j ? 1.0 : 0.0);
  const double alpha = smoothing_strength(gap, cfg);
  out.mu_tilde = (1.0 - alpha) * out.mu + alpha / static_cast<double>(cfg.num_labels);
  return out;
}

inline SoftLabel soft_label(double score_i, double score_j, double lambda, double k,
                            int num_labels) {
  RewardLearnerConfig cfg;
  cfg.lambda = lambda;
  cfg.tie_threshold = k;
  cfg.num_labels = num_labels;
  cfg.label_mode = LabelMode::adaptive;
  return soft_label(score_i, score_j, cfg);
}

struct SoftLabelPair {
  TrajectoryPtr traj_i;
  TrajectoryPtr traj_j;
  double score_i = 0.0;
  double score_j = 0.0;
  double mu = 0.5;
  double mu_tilde = 0.5;
};

inline SoftLabelPair make_pair_label(const ScoredTrajectory& a, const ScoredTrajectory& b,
                                     const RewardLearnerConfig& cfg) {
  const auto label = soft_label(a.score, b.score, cfg);
  return {a.trajectory, b.trajectory, a.score, b.score, label.mu, label.mu_tilde};
}

struct PairLossResult {
  double loss = 0.0;
  Gradients grads;
  double tie_fraction = 0.0;
};

// Mean cross entropy between mu_tilde and the predicted preference, with its
// gradient. All distinct trajectories in the batch share one forward pass.
inline PairLossResult pair_loss(const RewardModel& model, const std::vector<SoftLabelPair>& batch) {
  if (batch.empty()) throw ValidationError("pair_loss: empty batch");

  std::vector<const Trajectory*> unique;
  std::unordered_map<const Trajectory*, std::size_t> slot;
  auto intern = [&](const TrajectoryPtr& t) {
    if (!t || t->length() == 0) throw ValidationError("pair_loss: empty trajectory");
    auto [it, inserted] = slot.emplace(t.get(), unique.size());
    if (inserted) unique.push_back(t.get());
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  idx.reserve(batch.size());
  for (const auto& p : batch) idx.emplace_back(intern(p.traj_i), intern(p.traj_j));

  std::vector<Index> offset(unique.size() + 1, 0);
  for (std::size_t u = 0; u < unique.size(); ++u) offset[u + 1] = offset[u] + unique[u]->length();
  const Index in_dim = model.net().input_dim();
  Eigen::MatrixXd x(in_dim, offset.back());
  for (std::size_t u = 0; u < unique.size(); ++u)
    x.middleCols(offset[u], unique[u]->length()) = model.features(*unique[u]);

  const auto cache = model.net().forward_cached(x);
  const auto& out = cache.output();
  std::vector<double> returns(unique.size());
  for (std::size_t u = 0; u < unique.size(); ++u)
    returns[u] = out.middleCols(offset[u], unique[u]->length()).sum();

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> d_return(unique.size(), 0.0);
  double loss = 0.0;
  std::size_t ties = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto [i, j] = idx[k];
    const double z = returns[j] - returns[i];
    const double mt = batch[k].mu_tilde;
    // -[mt log sigma(z) + (1 - mt) log sigma(-z)]
    loss += mt * softplus(-z) + (1.0 - mt) * softplus(z);
    const double dz = (logistic(z) - mt) * inv_b;
    d_return[j] += dz;
    d_return[i] -= dz;
    if (batch[k].mu == 0.5) ++ties;
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw DivergenceError("reward_loss", "non-finite loss");

  Eigen::MatrixXd upstream(1, offset.back());
  for (std::size_t u = 0; u < unique.size(); ++u)
    upstream.middleCols(offset[u], unique[u]->length()).setConstant(d_return[u]);
  auto back = model.net().backward(cache, upstream);
  return {loss, std::move(back.params), static_cast<double>(ties) * inv_b};
}

}  // namespace scorerl
