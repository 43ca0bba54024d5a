#pragma once

// Five-arm bandit with fixed arm rewards and a constant observation; each
// pull is a one-step episode.

#include <array>
#include <cstdint>
#include <random>

#include "coadapt/ppo.hpp"

namespace bandit {

inline constexpr std::array<double, 5> kArmRewards{0.0, 0.2, 0.4, 0.6, 1.0};
inline constexpr int kBestArm = 4;

inline coadapt::PPOHyper hyper() {
  coadapt::PPOHyper h;
  h.buffer_size = 64;
  h.batch_size = 16;
  return h;
}

inline double best_arm_probability(const coadapt::PPOAgent& agent) {
  const std::vector<double> obs{1.0};
  return coadapt::actor_forward(agent.actor, obs).probabilities[kBestArm];
}

// Returns the number of updates until p(best) > threshold, or -1.
inline int updates_to_converge(std::uint64_t seed, int max_updates, double threshold = 0.9) {
  using namespace coadapt;
  const PPOHyper h = hyper();
  PPOAgent agent = PPOAgent::create(seed, 1, kArmRewards.size(), h, 16);
  ExperienceBuffer buffer(h.buffer_size);
  std::mt19937_64 act_rng(seed * 31 + 1), upd_rng(seed * 31 + 2);
  const std::vector<double> obs{1.0};
  for (int u = 1; u <= max_updates; ++u) {
    while (!buffer.full()) {
      const auto a = sample_action(actor_forward(agent.actor, obs), act_rng);
      buffer.push({obs, a.index, a.log_prob, kArmRewards[static_cast<std::size_t>(a.index)], obs, true});
    }
    update_agent(agent, buffer, h, upd_rng, u);
    if (best_arm_probability(agent) > threshold) return u;
  }
  return -1;
}

}  // namespace bandit
