#pragma once

// Concurrent training of the human and machine agents against the
// synthetic patient. Each decision step both actors sample an action from
// their own observation; both buffers receive the same shared reward.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "coadapt/environment.hpp"
#include "coadapt/ppo.hpp"

namespace coadapt {

struct DualAgents {
  PPOAgent human;
  PPOAgent machine;

  static DualAgents create(std::uint64_t seed, const PPOHyper& hyper) {
    return {PPOAgent::create(seed * 2 + 1, kHumanObsDim, kHumanActions, hyper),
            PPOAgent::create(seed * 2 + 2, kMachineObsDim, kMachineActions, hyper)};
  }
};

enum class AgentId : int { Human = 0, Machine = 1 };

struct AgentLossRecord {
  AgentId agent = AgentId::Human;
  LossRecord loss;
};

struct TrainOptions {
  int updates = 40;
  bool machine_only_reward = false;  // machine buffer gets the (k+1)-window machine reward instead
  // Sees every (human, machine) transition pair as it enters the buffers.
  std::function<void(const Transition&, const Transition&)> on_transition;
};

struct TrainResult {
  DualAgents agents;
  std::vector<double> value_curve;  // cumulative shared reward per completed training episode
  std::vector<AgentLossRecord> losses;
};

// Independent, reproducible stream for a given purpose.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) {
  return seed * 1000003ULL + episode;
}

inline TrainResult train(const SettingConfig& setting, const EnvConfig& env_config, const PPOHyper& hyper,
                         std::uint64_t seed, const TrainOptions& options = {}) {
  hyper.validate();
  require(options.updates >= 0, "update count must be non-negative");
  TrainResult result{DualAgents::create(seed, hyper), {}, {}};
  DualAgents& agents = result.agents;

  RehabEnvironment env(env_config, setting);
  std::mt19937_64 action_rng = make_rng(seed, 1);
  std::mt19937_64 update_rng = make_rng(seed, 2);
  std::uint64_t episode = 0;
  env.reset(episode_seed(seed, episode));
  double episode_return = 0.0;

  ExperienceBuffer human_buffer(hyper.buffer_size);
  ExperienceBuffer machine_buffer(hyper.buffer_size);

  for (int update = 0; update < options.updates; ++update) {
    while (!human_buffer.full()) {
      std::vector<double> human_obs = env.human_features();
      std::vector<double> machine_obs = env.machine_features();
      const SampledAction h = sample_action(actor_forward(agents.human.actor, human_obs), action_rng);
      const SampledAction m = sample_action(actor_forward(agents.machine.actor, machine_obs), action_rng);

      const DecisionOutcome outcome = env.step(VRIndicator::from_action(h.index), m.index);
      const double machine_reward_value = options.machine_only_reward ? env.machine_only_reward() : outcome.reward;
      episode_return += outcome.reward;

      human_buffer.push({std::move(human_obs), h.index, h.log_prob, hyper.reward_scale * outcome.reward,
                         env.human_features(), outcome.done});
      machine_buffer.push({std::move(machine_obs), m.index, m.log_prob, hyper.reward_scale * machine_reward_value,
                           env.machine_features(), outcome.done});
      if (options.on_transition)
        options.on_transition(human_buffer[human_buffer.size() - 1], machine_buffer[machine_buffer.size() - 1]);

      if (outcome.done) {
        result.value_curve.push_back(episode_return);
        episode_return = 0.0;
        env.reset(episode_seed(seed, ++episode));
      }
    }
    for (const auto& rec : update_agent(agents.human, human_buffer, hyper, update_rng, update))
      result.losses.push_back({AgentId::Human, rec});
    for (const auto& rec : update_agent(agents.machine, machine_buffer, hyper, update_rng, update))
      result.losses.push_back({AgentId::Machine, rec});
  }
  return result;
}

}  // namespace coadapt
