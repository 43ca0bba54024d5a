#pragma once

// Closed-loop evaluation episodes and the metrics computed from their traces.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "coadapt/environment.hpp"
#include "coadapt/training.hpp"

namespace coadapt {

struct EpisodeTrace {
  std::vector<TraceRecord> records;
  int decision_interval = 10;
  double unit_torque = 1.0;  // scales digits into human action torque for metrics
};

struct MetricsReport {
  double human_action_mse = 0.0;    // dispersion of digit * unit_torque about its mean, over decision steps
  double tracking_error_mse = 0.0;  // mean of (P - P_ref)^2 over plant steps
  double value = 0.0;               // cumulative shared reward
};

enum class ActionMode { Sample, Greedy };

// Maps (decision index, normalised observation) to an action index.
using PolicyFn = std::function<int(int, std::span<const double>)>;

inline PolicyFn actor_policy(const MLPParams& actor, ActionMode mode, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [actor, mode, rng](int, std::span<const double> obs) {
    const ActionDistribution d = actor_forward(actor, obs);
    return mode == ActionMode::Greedy ? greedy_action(d).index : sample_action(d, *rng).index;
  };
}

inline PolicyFn constant_policy(int action) {
  return [action](int, std::span<const double>) { return action; };
}

inline EpisodeTrace run_episode(const EnvConfig& env_config, const SettingConfig& setting, const PolicyFn& human,
                                const PolicyFn& machine, std::uint64_t seed) {
  RehabEnvironment env(env_config, setting);
  env.reset(seed);
  EpisodeTrace trace;
  trace.decision_interval = env_config.decision_interval;
  trace.unit_torque = env_config.human.unit_torque;
  trace.records.reserve(static_cast<std::size_t>(env_config.episode_steps));
  for (int decision = 0; !env.done(); ++decision) {
    const std::vector<double> h_obs = env.human_features();
    const std::vector<double> m_obs = env.machine_features();
    const int digit_index = human(decision, h_obs);
    const int machine_action = machine(decision, m_obs);
    require(digit_index >= 0 && digit_index < static_cast<int>(kHumanActions),
            "human policy returned an invalid action at decision " + std::to_string(decision));
    env.step(VRIndicator::from_action(digit_index), machine_action, &trace.records);
  }
  return trace;
}

// Trained or random agents acting from their actors. Sampling draws come
// from a stream derived from `seed`.
inline EpisodeTrace run_episode(const DualAgents& agents, const EnvConfig& env_config, const SettingConfig& setting,
                                std::uint64_t seed, ActionMode mode = ActionMode::Sample) {
  return run_episode(env_config, setting, actor_policy(agents.human.actor, mode, make_rng(seed, 11)()),
                     actor_policy(agents.machine.actor, mode, make_rng(seed, 12)()), seed);
}

inline MetricsReport mse_metrics(const EpisodeTrace& trace) {
  MetricsReport r;
  const auto& recs = trace.records;
  if (recs.empty()) return r;
  for (const auto& rec : recs) {
    const double e = rec.position - rec.reference;
    r.tracking_error_mse += e * e;
    r.value += rec.reward;
  }
  r.tracking_error_mse /= static_cast<double>(recs.size());

  std::vector<double> actions;
  const auto interval = static_cast<std::size_t>(trace.decision_interval);
  for (std::size_t i = interval - 1; i < recs.size(); i += interval)
    actions.push_back(static_cast<double>(recs[i].digit) * trace.unit_torque);
  if (!actions.empty()) {
    double mean = 0.0;
    for (double a : actions) mean += a;
    mean /= static_cast<double>(actions.size());
    for (double a : actions) r.human_action_mse += (a - mean) * (a - mean);
    r.human_action_mse /= static_cast<double>(actions.size());
  }
  return r;
}

struct Evaluation {
  MetricsReport mean;
  std::vector<MetricsReport> episodes;
  EpisodeTrace first_trace;
};

inline Evaluation evaluate(const DualAgents& agents, const EnvConfig& env_config, const SettingConfig& setting,
                           int n_episodes, std::uint64_t seed, ActionMode mode = ActionMode::Sample) {
  require(n_episodes > 0, "evaluation needs at least one episode");
  Evaluation ev;
  for (int i = 0; i < n_episodes; ++i) {
    EpisodeTrace trace = run_episode(agents, env_config, setting, episode_seed(seed, static_cast<std::uint64_t>(i)), mode);
    const MetricsReport m = mse_metrics(trace);
    ev.episodes.push_back(m);
    ev.mean.human_action_mse += m.human_action_mse;
    ev.mean.tracking_error_mse += m.tracking_error_mse;
    ev.mean.value += m.value;
    if (i == 0) ev.first_trace = std::move(trace);
  }
  const double n = static_cast<double>(n_episodes);
  ev.mean.human_action_mse /= n;
  ev.mean.tracking_error_mse /= n;
  ev.mean.value /= n;
  return ev;
}

// Mean cumulative shared reward over n evaluation episodes.
inline double evaluate_value(const DualAgents& agents, const EnvConfig& env_config, const SettingConfig& setting,
                             int n_episodes, std::uint64_t seed, ActionMode mode = ActionMode::Sample) {
  return evaluate(agents, env_config, setting, n_episodes, seed, mode).mean.value;
}

}  // namespace coadapt
