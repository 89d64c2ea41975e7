#pragma once

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/nn.hpp"
#include "scorerl/reward.hpp"
#include "scorerl/sampling.hpp"

namespace scorerl {

struct RewardUpdateStats {
  bool skipped = false;  // fewer than two scored trajectories
  std::vector<double> losses;
  std::vector<double> tie_fractions;
  std::size_t buffer_size = 0;
};

// Owns r_hat and its optimizer state.
class RewardLearner {
 public:
  RewardLearner(Index state_dim, Index action_dim, RewardLearnerConfig cfg, Rng& rng)
      : cfg_((cfg.validate(), cfg)),
        model_(RewardModel::create(state_dim, action_dim, cfg_, rng)),
        adam_(make_adam_state(model_.net(), AdamConfig{cfg_.learning_rate})) {}

  const RewardModel& model() const { return model_; }
  RewardModel& model() { return model_; }
  const RewardLearnerConfig& config() const { return cfg_; }
  std::int64_t total_steps() const { return adam_.step_count; }

  std::vector<SoftLabelPair> make_batch(const ScoringBuffer& d, const std::vector<IndexPair>& pairs) const {
    std::vector<SoftLabelPair> batch;
    batch.reserve(pairs.size());
    for (const auto& [i, j] : pairs) batch.push_back(make_pair_label(d[i], d[j], cfg_));
    return batch;
  }

  // `gradient_steps` Adam steps, each on a freshly sampled batch of pairs.
  // The caller is responsible for relabeling the replay buffer afterwards.
  RewardUpdateStats update(const ScoringBuffer& d, const PairSamplerConfig& sampler,
                           int gradient_steps, Rng& rng, std::ostream* log = nullptr) {
    RewardUpdateStats stats;
    stats.buffer_size = d.size();
    if (d.size() < 2) {
      stats.skipped = true;
      return stats;
    }
    for (int step = 0; step < gradient_steps; ++step) {
      const auto pairs =
          sample_pairs(d, sampler, static_cast<std::size_t>(cfg_.batch_size), model_, rng);
      const auto result = pair_loss(model_, make_batch(d, pairs));
      adam_step(model_.net(), result.grads, adam_, "reward_loss");
      stats.losses.push_back(result.loss);
      stats.tie_fractions.push_back(result.tie_fraction);
      if (log) {
        nlohmann::json line = {{"step", adam_.step_count},
                               {"loss", result.loss},
                               {"batch_tie_fraction", result.tie_fraction},
                               {"D", d.size()}};
        *log << line.dump() << '\n';
      }
    }
    return stats;
  }

 private:
  RewardLearnerConfig cfg_;
  RewardModel model_;
  AdamState adam_;
};

}  // namespace scorerl
