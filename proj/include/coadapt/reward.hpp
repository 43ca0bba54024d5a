#pragma once

// Reward terms over sliding windows of the last k decision steps.
//
// Windows are ordered oldest first: element 0 is sample z-k+1 and element
// k-1 is the current sample z.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "coadapt/error.hpp"

namespace coadapt {

inline constexpr std::size_t kMinWindow = 3;

struct RewardWeights {
  double mu = 1.0;     // tracking penalty
  double kappa = 1.0;  // comfort penalty
  double rho = 1.0;    // effort bonus
  double sigma = -1.0; // machine-only tracking weight
  double beta = 0.0;   // machine-only angular velocity weight

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct PositionWindow {
  std::vector<double> actual;
  std::vector<double> reference;
  double omega_z = 0.0;
};

struct ActionWindow {
  std::vector<double> actions;
  int effort_flag = 0;
};

// E = 1 exactly when the current action differs from the one before it.
inline ActionWindow make_action_window(std::vector<double> actions) {
  require(actions.size() >= kMinWindow, "action window needs at least 3 samples");
  const std::size_t k = actions.size();
  const int flag = actions[k - 1] != actions[k - 2] ? 1 : 0;
  return ActionWindow{std::move(actions), flag};
}

namespace detail {

inline double sum_squared_error(std::span<const double> actual, std::span<const double> reference) {
  require(actual.size() == reference.size(), "position window length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = actual[i] - reference[i];
    sum += e * e;
  }
  return sum;
}

}  // namespace detail

inline double tracking_term(const PositionWindow& w) {
  require(w.actual.size() >= kMinWindow, "position window needs at least 3 samples");
  return detail::sum_squared_error(w.actual, w.reference);
}

// Sum of absolute second differences of the actual positions.
inline double comfort_term(const PositionWindow& w) {
  const auto& p = w.actual;
  require(p.size() >= kMinWindow, "comfort term needs at least 3 samples");
  double sum = 0.0;
  for (std::size_t i = 2; i < p.size(); ++i) sum += std::abs(p[i] + p[i - 2] - 2.0 * p[i - 1]);
  return sum;
}

// The mean runs over all k actions; the squared deviations over the first
// k-1 of them, normalised by k-2.
inline double effort_term(const ActionWindow& a) {
  const std::size_t k = a.actions.size();
  require(k >= kMinWindow, "effort term needs at least 3 samples");
  if (a.effort_flag == 0) return 0.0;
  double mean = 0.0;
  for (double v : a.actions) mean += v;
  mean /= static_cast<double>(k);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const double d = a.actions[i] - mean;
    sum += d * d;
  }
  return static_cast<double>(a.effort_flag) * sum / static_cast<double>(k - 2);
}

// Machine reward. Its window spans z-k..z, i.e. one sample more than the
// human tracking term, so callers pass k+1 positions here.
inline double machine_reward(const PositionWindow& w, double sigma, double beta) {
  require(w.actual.size() >= kMinWindow, "position window needs at least 3 samples");
  return sigma * detail::sum_squared_error(w.actual, w.reference) + beta * w.omega_z;
}

// Tracking and comfort are penalties, effort is a bonus.
inline double human_reward(double r_m, double r_c, double r_e, const RewardWeights& weights) {
  return -weights.mu * r_m - weights.kappa * r_c + weights.rho * r_e;
}

struct RewardTerms {
  double tracking = 0.0;
  double comfort = 0.0;
  double effort = 0.0;
  double combined = 0.0;
};

inline RewardTerms reward_terms(const PositionWindow& w, const ActionWindow& a, const RewardWeights& weights) {
  RewardTerms t;
  t.tracking = tracking_term(w);
  t.comfort = comfort_term(w);
  t.effort = effort_term(a);
  t.combined = human_reward(t.tracking, t.comfort, t.effort, weights);
  return t;
}

// The common reward handed to both agents each decision step.
inline double shared_reward(const PositionWindow& w, const ActionWindow& a, const RewardWeights& weights) {
  return reward_terms(w, a, weights).combined;
}

}  // namespace coadapt
