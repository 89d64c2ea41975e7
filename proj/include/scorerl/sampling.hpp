#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <type_traits>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/error.hpp"
#include "scorerl/reward.hpp"

namespace scorerl {

// ---------------------------------------------------------------------------
// Query selection: 1-D k-means over predicted episodic returns.

struct KMeansResult {
  std::vector<double> centroids;     // ascending
  std::vector<std::size_t> assignment;  // per input value
  int iterations = 0;
};

// k-means++ seeding followed by at most `max_iterations` Lloyd rounds, stopping
// once assignments no longer change. Values are processed in sorted order so
// the result does not depend on the order they are given in.
inline KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, Rng& rng,
                              int max_iterations = 50) {
  if (k == 0) throw ValidationError("kmeans_1d: k must be positive");
  if (values.empty()) throw ValidationError("kmeans_1d: no values");
  const std::size_t n = values.size();
  k = std::min(k, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = values[order[i]];

  std::vector<double> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centroids.push_back(sorted[first(rng)]);
  std::vector<double> d2(n);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centroids) best = std::min(best, (sorted[i] - c) * (sorted[i] - c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All remaining points coincide with a centroid.
      centroids.push_back(sorted[first(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(sorted[pick]);
  }

  std::vector<std::size_t> assign(n, k);
  int it = 0;
  for (; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = std::abs(sorted[i] - centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += sorted[i];
      count[assign[i]] += 1;
    }
    for (std::size_t c = 0; c < k; ++c)
      if (count[c] > 0) centroids[c] = sum[c] / static_cast<double>(count[c]);
  }

  // Relabel clusters so centroids ascend.
  std::vector<std::size_t> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return centroids[a] < centroids[b]; });
  std::vector<std::size_t> new_label(k);
  for (std::size_t r = 0; r < k; ++r) new_label[rank[r]] = r;

  KMeansResult out;
  out.iterations = it;
  out.centroids.resize(k);
  for (std::size_t c = 0; c < k; ++c) out.centroids[new_label[c]] = centroids[c];
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.assignment[order[i]] = new_label[assign[i]];
  return out;
}

struct QuerySelection {
  std::vector<TrajectoryId> candidate_ids;
  std::vector<TrajectoryId> selected_ids;
  std::vector<double> centroid_returns;
};

// For every centroid pick the candidate whose predicted return is nearest,
// falling back to the next-nearest unselected candidate on collisions.
inline QuerySelection select_queries_by_returns(const std::vector<TrajectoryId>& ids,
                                                const std::vector<double>& returns, int j,
                                                Rng& rng) {
  if (j <= 0) throw ValidationError("select_queries: J must be positive");
  if (ids.empty()) throw ValidationError("select_queries: no candidates");
  if (ids.size() != returns.size()) throw ValidationError("select_queries: size mismatch");
  QuerySelection sel;
  sel.candidate_ids = ids;
  const auto n = ids.size();
  if (static_cast<std::size_t>(j) >= n) {
    sel.selected_ids = ids;
    sel.centroid_returns = returns;
    return sel;
  }
  const auto km = kmeans_1d(returns, static_cast<std::size_t>(j), rng);
  sel.centroid_returns = km.centroids;

  std::vector<bool> taken(n, false);
  for (double c : km.centroids) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n) {
        best = i;
        continue;
      }
      const double di = std::abs(returns[i] - c);
      const double db = std::abs(returns[best] - c);
      // Ties broken by id so the choice is independent of candidate order.
      if (di < db || (di == db && ids[i] < ids[best])) best = i;
    }
    taken[best] = true;
    sel.selected_ids.push_back(ids[best]);
  }
  return sel;
}

inline QuerySelection select_queries_kmeans(const RewardModel& model,
                                            const std::vector<TrajectoryPtr>& candidates, int j,
                                            Rng& rng) {
  std::vector<TrajectoryId> ids;
  std::vector<double> returns;
  for (const auto& t : candidates) {
    ids.push_back(t->id);
    returns.push_back(model.predicted_return(*t));
  }
  return select_queries_by_returns(ids, returns, j, rng);
}

// ---------------------------------------------------------------------------
// Pair sampling from the scoring buffer.

enum class PairScheme { uniform, entropy, priority };

inline std::string_view to_string(PairScheme s) {
  switch (s) {
    case PairScheme::uniform: return "uniform";
    case PairScheme::entropy: return "entropy";
    case PairScheme::priority: return "priority";
  }
  return "uniform";
}

inline PairScheme pair_scheme_from_string(std::string_view s) {
  if (s == "uniform") return PairScheme::uniform;
  if (s == "entropy") return PairScheme::entropy;
  if (s == "priority") return PairScheme::priority;
  throw ValidationError("unknown pair sampler '" + std::string(s) + "'");
}

struct PairSamplerConfig {
  PairScheme scheme = PairScheme::priority;
  double beta = 3.0;
  int entropy_pool_multiplier = 10;

  void validate() const {
    if (!(beta > 0.0)) throw ValidationError("beta must be positive");
    if (entropy_pool_multiplier <= 0)
      throw ValidationError("entropy_pool_multiplier must be positive");
  }
};

using IndexPair = std::pair<std::size_t, std::size_t>;

// Selection weights s_i^beta over the whole buffer; all-zero falls back to uniform.
inline std::vector<double> priority_weights(const ScoringBuffer& d, double beta) {
  std::vector<double> w(d.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double s = d[i].score;
    if (s < 0.0) throw ValidationError("priority sampling needs non-negative scores");
    w[i] = s == 0.0 ? 0.0 : std::pow(s, beta);
    total += w[i];
  }
  if (total == 0.0) std::fill(w.begin(), w.end(), 1.0);
  return w;
}

namespace detail {

inline std::size_t uniform_other(std::size_t n, std::size_t exclude, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 2);
  const auto k = pick(rng);
  return k >= exclude ? k + 1 : k;
}

inline IndexPair uniform_pair(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const auto i = pick(rng);
  return {i, uniform_other(n, i, rng)};
}

}  // namespace detail

// `m` pairs of distinct indices into `d`. The priority scheme draws the first
// member of each pair by score priority and the second uniformly.
template <class ReturnFn>
  requires std::is_invocable_r_v<double, ReturnFn&, const ScoredTrajectory&>
std::vector<IndexPair> sample_pairs(const ScoringBuffer& d, const PairSamplerConfig& cfg,
                                    std::size_t m, ReturnFn&& predicted_return, Rng& rng) {
  const std::size_t n = d.size();
  if (n < 2) throw ValidationError("sample_pairs: need at least two scored trajectories");
  std::vector<IndexPair> out;
  out.reserve(m);
  switch (cfg.scheme) {
    case PairScheme::uniform:
      for (std::size_t k = 0; k < m; ++k) out.push_back(detail::uniform_pair(n, rng));
      break;
    case PairScheme::priority: {
      const auto w = priority_weights(d, cfg.beta);
      std::discrete_distribution<std::size_t> prio(w.begin(), w.end());
      for (std::size_t k = 0; k < m; ++k) {
        const auto i = prio(rng);
        out.emplace_back(i, detail::uniform_other(n, i, rng));
      }
      break;
    }
    case PairScheme::entropy: {
      const std::size_t pool_size = m * static_cast<std::size_t>(cfg.entropy_pool_multiplier);
      std::vector<IndexPair> pool;
      pool.reserve(pool_size);
      for (std::size_t k = 0; k < pool_size; ++k) pool.push_back(detail::uniform_pair(n, rng));
      std::unordered_map<std::size_t, double> returns;
      auto ret = [&](std::size_t i) {
        auto it = returns.find(i);
        if (it == returns.end()) it = returns.emplace(i, predicted_return(d[i])).first;
        return it->second;
      };
      std::vector<double> h(pool.size());
      for (std::size_t k = 0; k < pool.size(); ++k)
        h[k] = binary_entropy(preference_probability(ret(pool[k].first), ret(pool[k].second)));
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
      for (std::size_t k = 0; k < std::min(m, pool.size()); ++k) out.push_back(pool[order[k]]);
      break;
    }
  }
  return out;
}

inline std::vector<IndexPair> sample_pairs(const ScoringBuffer& d, const PairSamplerConfig& cfg,
                                           std::size_t m, const RewardModel& model, Rng& rng) {
  return sample_pairs(
      d, cfg, m, [&](const ScoredTrajectory& e) { return model.predicted_return(*e.trajectory); },
      rng);
}

}  // namespace scorerl
