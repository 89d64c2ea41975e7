#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "scorerl/buffers.hpp"
#include "scorerl/error.hpp"
#include "scorerl/nn.hpp"

namespace scorerl {

struct TeacherConfig {
  ScoreRange range{0.0, 10.0};
  double noise_variance = 0.0;
  double quantization_step = 0.5;  // 0 disables quantization
  double return_min = 0.0;
  double return_max = 1.0;

  void validate() const {
    if (!(range.lo < range.hi)) throw ValidationError("teacher: scoring range needs lo < hi");
    if (noise_variance < 0.0) throw ValidationError("teacher: noise variance must be >= 0");
    if (quantization_step < 0.0) throw ValidationError("teacher: quantization step must be >= 0");
    if (quantization_step > 0.0) {
      const double steps = (range.hi - range.lo) / quantization_step;
      if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ValidationError("teacher: range width must be a multiple of the quantization step");
    }
    if (!(return_min < return_max)) throw ValidationError("teacher: return bounds need min < max");
  }
};

// Linear map of the episodic return onto the scoring range, clipped.
inline double perfect_score(const TeacherConfig& cfg, double true_return) {
  const double frac =
      std::clamp((true_return - cfg.return_min) / (cfg.return_max - cfg.return_min), 0.0, 1.0);
  return cfg.range.lo + (cfg.range.hi - cfg.range.lo) * frac;
}

inline double quantize_score(const TeacherConfig& cfg, double score) {
  if (cfg.quantization_step <= 0.0) return score;
  const double q = cfg.range.lo + std::round((score - cfg.range.lo) / cfg.quantization_step) *
                                      cfg.quantization_step;
  return std::clamp(q, cfg.range.lo, cfg.range.hi);
}

// Gaussian perturbation of the perfect score, clipped to the range, then
// snapped to the quantization grid.
inline double noisy_score(const TeacherConfig& cfg, double true_return, Rng& rng) {
  double s = perfect_score(cfg, true_return);
  if (cfg.noise_variance > 0.0) {
    std::normal_distribution<double> noise(s, std::sqrt(cfg.noise_variance));
    s = noise(rng);
  }
  return quantize_score(cfg, std::clamp(s, cfg.range.lo, cfg.range.hi));
}

class ScriptedTeacher {
 public:
  ScriptedTeacher(TeacherConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
  }

  const TeacherConfig& config() const { return cfg_; }

  // Noise is drawn per call; scoring the same trajectory twice may differ.
  double score(const Trajectory& traj) { return noisy_score(cfg_, traj.true_return, rng_); }

 private:
  TeacherConfig cfg_;
  Rng rng_;
};

// ---------------------------------------------------------------------------

struct RankCorrelation {
  std::int64_t concordant = 0;  // P
  std::int64_t discordant = 0;  // Q
  std::int64_t ties_x = 0;      // T: tied only in xs
  std::int64_t ties_y = 0;      // U: tied only in ys
  double tau_b = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;  // false when either side is entirely tied
};

// Exact O(n^2) pair count; tau_b = (P - Q) / sqrt((P + Q + T)(P + Q + U)).
inline RankCorrelation kendall_tau_b(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("kendall_tau_b: length mismatch");
  if (xs.size() < 2) throw ValidationError("kendall_tau_b: need at least two observations");
  RankCorrelation r;
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = xs[i] - xs[j];
      const double dy = ys[i] - ys[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++r.ties_x;
      } else if (dy == 0.0) {
        ++r.ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++r.concordant;
      } else {
        ++r.discordant;
      }
    }
  }
  const auto a = r.concordant + r.discordant + r.ties_x;
  const auto b = r.concordant + r.discordant + r.ties_y;
  if (a > 0 && b > 0) {
    r.tau_b = static_cast<double>(r.concordant - r.discordant) /
              std::sqrt(static_cast<double>(a) * static_cast<double>(b));
    r.defined = true;
  }
  return r;
}

inline RankCorrelation kendall_tau_b(const std::vector<double>& xs, const std::vector<double>& ys) {
  return kendall_tau_b(std::span<const double>(xs), std::span<const double>(ys));
}

}  // namespace scorerl
