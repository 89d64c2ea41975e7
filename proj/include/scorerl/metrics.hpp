#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/error.hpp"
#include "scorerl/reward.hpp"
#include "scorerl/teacher.hpp"

namespace scorerl {

// NaN when either series has zero variance.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ValidationError("pearson: bad lengths");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// argmin_c sum (c * predicted - truth)^2, a fit through the origin.
inline double least_squares_scale(const std::vector<double>& predicted,
                                  const std::vector<double>& truth) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    num += predicted[i] * truth[i];
    den += predicted[i] * predicted[i];
  }
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / den;
}

struct CorrelationReport {
  std::vector<double> true_returns;
  std::vector<double> predicted_returns;
  double pearson_r = std::numeric_limits<double>::quiet_NaN();
  RankCorrelation kendall;
  double scale = std::numeric_limits<double>::quiet_NaN();  // per-step alignment coefficient
  bool defined = false;
};

inline CorrelationReport return_correlation(const RewardModel& model,
                                            const std::vector<TrajectoryPtr>& trajectories) {
  if (trajectories.size() < 2) throw ValidationError("return_correlation: need >= 2 trajectories");
  CorrelationReport r;
  std::vector<double> step_pred, step_true;
  for (const auto& t : trajectories) {
    const Eigen::VectorXd steps = model.step_rewards(*t);
    r.true_returns.push_back(t->true_return);
    r.predicted_returns.push_back(steps.sum());
    for (Index k = 0; k < steps.size(); ++k) {
      step_pred.push_back(steps(k));
      step_true.push_back(t->true_rewards[static_cast<std::size_t>(k)]);
    }
  }
  r.pearson_r = pearson(r.predicted_returns, r.true_returns);
  r.kendall = kendall_tau_b(r.predicted_returns, r.true_returns);
  r.scale = least_squares_scale(step_pred, step_true);
  r.defined = std::isfinite(r.pearson_r) && r.kendall.defined;
  return r;
}

struct AlignedStep {
  double truth = 0.0;
  double scaled_prediction = 0.0;
};

inline std::vector<AlignedStep> stepwise_alignment(const RewardModel& model,
                                                   const Trajectory& traj, double scale) {
  if (traj.true_rewards.size() != static_cast<std::size_t>(traj.length()))
    throw ValidationError("stepwise_alignment: trajectory lacks per-step true rewards");
  const Eigen::VectorXd steps = model.step_rewards(traj);
  std::vector<AlignedStep> out(static_cast<std::size_t>(steps.size()));
  for (Index k = 0; k < steps.size(); ++k)
    out[static_cast<std::size_t>(k)] = {traj.true_rewards[static_cast<std::size_t>(k)],
                                        scale * steps(k)};
  return out;
}

}  // namespace scorerl
