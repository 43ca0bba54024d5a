#pragma once

// Runs one episode twice: machine actor in-process, and machine actor behind
// a localhost policy server.

#include <future>
#include <thread>

#include "coadapt/bridge.hpp"
#include "coadapt/training.hpp"

namespace loopback {

struct Result {
  coadapt::EpisodeTrace in_process;
  coadapt::EpisodeTrace bridged;
};

inline Result run(const coadapt::DualAgents& agents, const coadapt::EnvConfig& cfg,
                  const coadapt::SettingConfig& setting, std::uint64_t seed) {
  using namespace coadapt;
  auto human = [&] { return actor_policy(agents.human.actor, ActionMode::Sample, make_rng(seed, 11)()); };

  Result r;
  r.in_process =
      run_episode(cfg, setting, human(), actor_policy(agents.machine.actor, ActionMode::Greedy, 0), seed);

  PolicyServer server(std::nullopt, agents.machine.actor);
  std::promise<std::uint16_t> port;
  ServeOptions opt;
  opt.max_connections = 1;
  opt.on_listening = [&](std::uint16_t p) { port.set_value(p); };
  std::thread serving([&] { serve_policies({"127.0.0.1", 0}, server, opt); });
  {
    BridgeClient client({"127.0.0.1", port.get_future().get()});
    r.bridged = run_episode(cfg, setting, human(), remote_policy(client, 1), seed);
  }
  serving.join();
  return r;
}

}  // namespace loopback
