#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/env.hpp"
#include "scorerl/error.hpp"
#include "scorerl/nn.hpp"

namespace scorerl {

struct SacConfig {
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;  // Polyak coefficient for the target critics
  int hidden_layers = 2;
  int hidden_units = 256;
  Activation activation = Activation::relu;
  double initial_alpha = 1.0;
  bool auto_entropy = true;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("sac: learning_rate must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw ValidationError("sac: gamma must be in [0, 1]");
    if (tau < 0.0 || tau > 1.0) throw ValidationError("sac: tau must be in [0, 1]");
    if (hidden_units <= 0 || hidden_layers < 0)
      throw ValidationError("sac: sizes must be positive");
    if (!(initial_alpha > 0.0)) throw ValidationError("sac: initial_alpha must be positive");
  }
};

// Columns are samples.
struct SacBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd done;  // 1 for terminal transitions

  Index size() const { return states.cols(); }

  static SacBatch from(const std::vector<const Transition*>& ts) {
    if (ts.empty()) throw ValidationError("empty SAC batch");
    const auto n = static_cast<Index>(ts.size());
    SacBatch b;
    b.states.resize(ts[0]->s.size(), n);
    b.actions.resize(ts[0]->a.size(), n);
    b.rewards.resize(n);
    b.next_states.resize(ts[0]->s_next.size(), n);
    b.done.resize(n);
    for (Index k = 0; k < n; ++k) {
      const auto& t = *ts[static_cast<std::size_t>(k)];
      b.states.col(k) = t.s;
      b.actions.col(k) = t.a;
      b.rewards(k) = t.r_hat;
      b.next_states.col(k) = t.s_next;
      b.done(k) = t.done ? 1.0 : 0.0;
    }
    return b;
  }
};

struct SacLosses {
  double q1 = 0.0;
  double q2 = 0.0;
  double policy = 0.0;
  double alpha = 0.0;
};

struct CriticGradients {
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  Gradients q1;
  Gradients q2;
  Eigen::VectorXd targets;
};

struct ActorGradients {
  double policy_loss = 0.0;
  double alpha_loss = 0.0;
  Gradients policy;
  double log_alpha = 0.0;  // d alpha_loss / d log_alpha
  Eigen::VectorXd log_probs;
};

// Soft actor-critic with a tanh-squashed Gaussian policy, twin critics and
// automatic entropy tuning.
class SacAgent {
 public:
  static constexpr double kSquashEpsilon = 1e-6;

  SacAgent(const EnvSpec& env, SacConfig cfg, Rng& rng)
      : cfg_((cfg.validate(), cfg)), state_dim_(env.state_dim), action_dim_(env.action_dim) {
    std::vector<Index> hidden(static_cast<std::size_t>(cfg_.hidden_layers), cfg_.hidden_units);
    policy_ = DenseNet::mlp(state_dim_, hidden, 2 * action_dim_, cfg_.activation,
                            Activation::identity, rng);
    q1_ = DenseNet::mlp(state_dim_ + action_dim_, hidden, 1, cfg_.activation,
                        Activation::identity, rng);
    q2_ = DenseNet::mlp(state_dim_ + action_dim_, hidden, 1, cfg_.activation,
                        Activation::identity, rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
    scale_.resize(action_dim_);
    offset_.resize(action_dim_);
    for (Index d = 0; d < action_dim_; ++d) {
      const auto [lo, hi] = env.action_bounds[static_cast<std::size_t>(d)];
      scale_(d) = (hi - lo) / 2.0;
      offset_(d) = (hi + lo) / 2.0;
    }
    const AdamConfig adam{cfg_.learning_rate};
    policy_adam_ = make_adam_state(policy_, adam);
    q1_adam_ = make_adam_state(q1_, adam);
    q2_adam_ = make_adam_state(q2_, adam);
    alpha_adam_.config = adam;
    log_alpha_ = std::log(cfg_.initial_alpha);
    target_entropy_ = -static_cast<double>(action_dim_);
  }

  const SacConfig& config() const { return cfg_; }
  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }
  double& log_alpha() { return log_alpha_; }
  double target_entropy() const { return target_entropy_; }
  const DenseNet& policy() const { return policy_; }
  DenseNet& policy() { return policy_; }
  const DenseNet& q1() const { return q1_; }
  DenseNet& q1() { return q1_; }
  const DenseNet& q2() const { return q2_; }
  DenseNet& q2() { return q2_; }
  const DenseNet& q1_target() const { return q1_target_; }
  const DenseNet& q2_target() const { return q2_target_; }
  const Eigen::VectorXd& action_scale() const { return scale_; }
  const Eigen::VectorXd& action_offset() const { return offset_; }

  // Policy head split into mean and clamped log-std.
  struct Head {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd raw_log_std;
    Eigen::MatrixXd log_std;
  };

  Head head(const Eigen::MatrixXd& policy_out) const {
    Head h;
    h.mean = policy_out.topRows(action_dim_);
    h.raw_log_std = policy_out.bottomRows(action_dim_);
    h.log_std = h.raw_log_std.cwiseMax(cfg_.log_std_min).cwiseMin(cfg_.log_std_max);
    return h;
  }

  // log density of the squashed action produced by pre-tanh sample `x`.
  // Matches the reference implementation, including its 1e-6 guard.
  double log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                  const Eigen::VectorXd& x) const {
    double lp = 0.0;
    for (Index d = 0; d < action_dim_; ++d) {
      const double sd = std::exp(log_std(d));
      const double e = (x(d) - mean(d)) / sd;
      const double y = std::tanh(x(d));
      lp += -0.5 * e * e - log_std(d) - 0.5 * std::log(2.0 * std::numbers::pi) -
            std::log(scale_(d) * (1.0 - y * y) + kSquashEpsilon);
    }
    return lp;
  }

  // Log density of an environment-space action under the current policy.
  double action_log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const {
    const auto h = head(policy_.forward(state));
    Eigen::VectorXd x(action_dim_);
    for (Index d = 0; d < action_dim_; ++d) x(d) = std::atanh((action(d) - offset_(d)) / scale_(d));
    return log_prob(h.mean.col(0), h.log_std.col(0), x);
  }

  Eigen::VectorXd act(const Eigen::VectorXd& state, bool deterministic, Rng& rng) const {
    const auto h = head(policy_.forward(state));
    Eigen::VectorXd a(action_dim_);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index d = 0; d < action_dim_; ++d) {
      const double x = deterministic ? h.mean(d, 0)
                                     : h.mean(d, 0) + std::exp(h.log_std(d, 0)) * normal(rng);
      a(d) = std::tanh(x) * scale_(d) + offset_(d);
    }
    return a;
  }

  Eigen::MatrixXd sample_noise(Index n, Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd eps(action_dim_, n);
    for (Index k = 0; k < n; ++k)
      for (Index d = 0; d < action_dim_; ++d) eps(d, k) = normal(rng);
    return eps;
  }

  // Critic losses mean((Q_i - y)^2) with
  // y = r + gamma (1 - done) (min Q_target(s', a') - alpha log pi(a'|s')).
  // `next_noise` supplies the reparameterisation draws for a'.
  CriticGradients critic_gradients(const SacBatch& b, const Eigen::MatrixXd& next_noise) const {
    const Index n = b.size();
    const auto nh = head(policy_.forward_batch(b.next_states));
    Eigen::MatrixXd next_actions(action_dim_, n);
    Eigen::VectorXd next_logp(n);
    for (Index k = 0; k < n; ++k) {
      Eigen::VectorXd x = nh.mean.col(k) + (nh.log_std.col(k).array().exp() *
                                            next_noise.col(k).array()).matrix();
      next_logp(k) = log_prob(nh.mean.col(k), nh.log_std.col(k), x);
      next_actions.col(k) = (x.array().tanh() * scale_.array() + offset_.array()).matrix();
    }
    Eigen::MatrixXd next_in(state_dim_ + action_dim_, n);
    next_in << b.next_states, next_actions;
    const Eigen::RowVectorXd t1 = q1_target_.forward_batch(next_in);
    const Eigen::RowVectorXd t2 = q2_target_.forward_batch(next_in);
    const double a = alpha();
    CriticGradients out;
    out.targets.resize(n);
    for (Index k = 0; k < n; ++k) {
      const double soft_v = std::min(t1(k), t2(k)) - a * next_logp(k);
      out.targets(k) = b.rewards(k) + cfg_.gamma * (1.0 - b.done(k)) * soft_v;
    }

    Eigen::MatrixXd in(state_dim_ + action_dim_, n);
    in << b.states, b.actions;
    const double inv_n = 1.0 / static_cast<double>(n);
    auto fit = [&](const DenseNet& q, double& loss, Gradients& grads) {
      const auto cache = q.forward_cached(in);
      const Eigen::RowVectorXd err = cache.output().row(0) - out.targets.transpose();
      loss = err.squaredNorm() * inv_n;
      grads = q.backward(cache, 2.0 * inv_n * err).params;
    };
    fit(q1_, out.q1_loss, out.q1);
    fit(q2_, out.q2_loss, out.q2);
    return out;
  }

  // Policy loss mean(alpha log pi(a|s) - min Q(s, a)) with a = tanh(mu + sigma eps),
  // and the temperature loss -mean(log_alpha (log pi + target_entropy)).
  ActorGradients actor_gradients(const SacBatch& b, const Eigen::MatrixXd& noise) const {
    const Index n = b.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double a = alpha();
    const auto pcache = policy_.forward_cached(b.states);
    const auto h = head(pcache.output());

    Eigen::MatrixXd x(action_dim_, n), y(action_dim_, n), actions(action_dim_, n);
    ActorGradients out;
    out.log_probs.resize(n);
    for (Index k = 0; k < n; ++k) {
      for (Index d = 0; d < action_dim_; ++d) {
        x(d, k) = h.mean(d, k) + std::exp(h.log_std(d, k)) * noise(d, k);
        y(d, k) = std::tanh(x(d, k));
        actions(d, k) = y(d, k) * scale_(d) + offset_(d);
      }
      out.log_probs(k) = log_prob(h.mean.col(k), h.log_std.col(k), x.col(k));
    }

    Eigen::MatrixXd in(state_dim_ + action_dim_, n);
    in << b.states, actions;
    const auto c1 = q1_.forward_cached(in);
    const auto c2 = q2_.forward_cached(in);
    Eigen::MatrixXd up1 = Eigen::MatrixXd::Zero(1, n), up2 = Eigen::MatrixXd::Zero(1, n);
    double q_sum = 0.0;
    for (Index k = 0; k < n; ++k) {
      const double v1 = c1.output()(0, k), v2 = c2.output()(0, k);
      if (v1 <= v2) {
        up1(0, k) = -inv_n;
        q_sum += v1;
      } else {
        up2(0, k) = -inv_n;
        q_sum += v2;
      }
    }
    const Eigen::MatrixXd dq1 = q1_.backward(c1, up1, false).input.bottomRows(action_dim_);
    const Eigen::MatrixXd dq2 = q2_.backward(c2, up2, false).input.bottomRows(action_dim_);

    Eigen::MatrixXd upstream(2 * action_dim_, n);
    for (Index k = 0; k < n; ++k) {
      for (Index d = 0; d < action_dim_; ++d) {
        const double yy = y(d, k);
        const double squash = scale_(d) * (1.0 - yy * yy);
        // d/dx of -log(scale (1 - tanh^2 x) + eps)
        const double dguard = 2.0 * yy * squash / (squash + kSquashEpsilon);
        const double dx = (dq1(d, k) + dq2(d, k)) * squash + a * inv_n * dguard;
        upstream(d, k) = dx;
        const double raw = h.raw_log_std(d, k);
        const bool clamped = raw < cfg_.log_std_min || raw > cfg_.log_std_max;
        upstream(action_dim_ + d, k) =
            clamped ? 0.0 : -a * inv_n + dx * std::exp(h.log_std(d, k)) * noise(d, k);
      }
    }
    out.policy = policy_.backward(pcache, upstream).params;
    out.policy_loss = (a * out.log_probs.sum() - q_sum) * inv_n;
    const double mean_term = (out.log_probs.array() + target_entropy_).mean();
    out.alpha_loss = -log_alpha_ * mean_term;
    out.log_alpha = -mean_term;
    return out;
  }

  // One gradient step for both critics, the policy and the temperature,
  // followed by a Polyak update of the target critics.
  SacLosses update(const SacBatch& b, Rng& rng) {
    const auto critic = critic_gradients(b, sample_noise(b.size(), rng));
    check_finite("q1", critic.q1_loss);
    check_finite("q2", critic.q2_loss);
    adam_step(q1_, critic.q1, q1_adam_, "q1");
    adam_step(q2_, critic.q2, q2_adam_, "q2");

    const auto actor = actor_gradients(b, sample_noise(b.size(), rng));
    check_finite("policy", actor.policy_loss);
    check_finite("alpha", actor.alpha_loss);
    adam_step(policy_, actor.policy, policy_adam_, "policy");
    if (cfg_.auto_entropy) alpha_adam_.step(log_alpha_, actor.log_alpha, "alpha");

    soft_update(q1_target_, q1_);
    soft_update(q2_target_, q2_);
    return {critic.q1_loss, critic.q2_loss, actor.policy_loss, actor.alpha_loss};
  }

  void soft_update(DenseNet& target, const DenseNet& online) const {
    auto& tl = target.layers();
    const auto& ol = online.layers();
    for (std::size_t l = 0; l < tl.size(); ++l) {
      tl[l].weight = (1.0 - cfg_.tau) * tl[l].weight + cfg_.tau * ol[l].weight;
      tl[l].bias = (1.0 - cfg_.tau) * tl[l].bias + cfg_.tau * ol[l].bias;
    }
  }

  nlohmann::json checkpoint() const {
    return {{"policy", to_json(policy_)},       {"q1", to_json(q1_)},
            {"q2", to_json(q2_)},               {"q1_target", to_json(q1_target_)},
            {"q2_target", to_json(q2_target_)}, {"log_alpha", log_alpha_}};
  }

  void load_policy(const nlohmann::json& j) { policy_ = dense_net_from_json(j); }

 private:
  static void check_finite(const char* name, double v) {
    if (!std::isfinite(v)) throw DivergenceError(name, "non-finite loss");
  }

  SacConfig cfg_;
  Index state_dim_;
  Index action_dim_;
  DenseNet policy_, q1_, q2_, q1_target_, q2_target_;
  AdamState policy_adam_, q1_adam_, q2_adam_;
  ScalarAdam alpha_adam_;
  double log_alpha_ = 0.0;
  double target_entropy_ = 0.0;
  Eigen::VectorXd scale_, offset_;
};

}  // namespace scorerl
