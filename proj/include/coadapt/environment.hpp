#pragma once

// Closed-loop rehabilitation episode at two rates: the plant, the machine
// PID and the human model run every plant step; both agents act once every
// `decision_interval` plant steps and receive the shared reward there.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <numbers>
#include <random>
#include <vector>

#include "coadapt/controllers.hpp"
#include "coadapt/error.hpp"
#include "coadapt/human_model.hpp"
#include "coadapt/plant.hpp"
#include "coadapt/reward.hpp"

namespace coadapt {

inline constexpr std::size_t kHumanObsDim = 5;
inline constexpr std::size_t kMachineObsDim = 6;
inline constexpr std::size_t kHumanActions = VRIndicator::kCount;
inline constexpr std::size_t kMachineActions = 2;

struct EnvConfig {
  PlantParams plant;
  ReferenceTrajectory reference;
  HumanModelParams human;
  int decision_interval = 10;  // plant steps per decision
  std::size_t window = 10;     // k, in decision steps
  int episode_steps = 800;     // plant steps per episode
  // Positions enter the reward windows in degrees.
  double reward_position_scale = 180.0 / std::numbers::pi;

  void validate() const {
    plant.validate();
    reference.validate_against(plant);
    human.validate();
    require(decision_interval > 0, "decision_interval must be positive");
    require(window >= kMinWindow, "reward window must be at least 3");
    require(episode_steps > 0 && episode_steps % decision_interval == 0,
            "episode_steps must be a positive multiple of decision_interval");
    require(reward_position_scale > 0.0, "reward_position_scale must be positive");
  }

  int decisions_per_episode() const { return episode_steps / decision_interval; }
};

// Agent_0 observation: simulated position, trajectory error, trajectory
// smoothness, previous digit, machine torque.
struct ObservationHuman {
  double p = 0.0;
  double e_t = 0.0;
  double sm_t = 0.0;
  double v_prev = 0.0;
  double tau_m = 0.0;
};

// Agent_1 observation: reference, motor position, error, angular velocity,
// previous sub-controller index, human torque.
struct ObservationMachine {
  double r_p = 0.0;
  double p_m = 0.0;
  double e_t = 0.0;
  double omega = 0.0;
  double a_prev = 0.0;
  double tau_h = 0.0;
};

// Fixed scales that bring observations to O(1).
struct ObservationScales {
  double angle = 1.0;
  double omega = 1.0;
  double torque = 1.0;
  double digit = 2.0;

  static ObservationScales from(const EnvConfig& cfg) {
    ObservationScales s;
    s.angle = cfg.reference.amplitude > 0.0 ? cfg.reference.amplitude : 1.0;
    s.omega = 2.0 * std::numbers::pi * s.angle / cfg.reference.period;
    s.torque = cfg.plant.torque_limit;
    return s;
  }
};

inline std::vector<double> normalize(const ObservationHuman& o, const ObservationScales& s) {
  return {o.p / s.angle, o.e_t / s.angle, o.sm_t / s.angle, o.v_prev / s.digit, o.tau_m / s.torque};
}

inline std::vector<double> normalize(const ObservationMachine& o, const ObservationScales& s) {
  return {o.r_p / s.angle, o.p_m / s.angle, o.e_t / s.angle, o.omega / s.omega, o.a_prev, o.tau_h / s.torque};
}

// One plant-rate record.
struct TraceRecord {
  double t = 0.0;
  double reference = 0.0;
  double position = 0.0;
  double omega = 0.0;
  double tau_m = 0.0;
  double tau_h = 0.0;
  int digit = 0;
  int machine_action = 0;
  double reward = 0.0;  // non-zero only on the last plant step of a decision

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct DecisionOutcome {
  double reward = 0.0;
  RewardTerms terms;
  bool done = false;
};

class RehabEnvironment {
 public:
  RehabEnvironment(EnvConfig config, SettingConfig setting)
      : config_(std::move(config)), setting_(std::move(setting)), scales_(ObservationScales::from(config_)) {
    config_.validate();
  }

  const EnvConfig& config() const { return config_; }
  const SettingConfig& setting() const { return setting_; }
  const ObservationScales& scales() const { return scales_; }

  void reset(std::uint64_t seed) {
    pedal_ = PedalState{};
    human_ = make_human_state(config_.human);
    machine_ctrl_ = ControllerState{};
    machine_index_ = 0;
    digit_ = VRIndicator(0);
    tau_m_ = 0.0;
    tau_h_ = 0.0;
    steps_ = 0;
    std::seed_seq seq{config_.human.rng_seed, seed};
    noise_rng_.seed(seq);

    const double r0 = config_.reward_position_scale * sample_reference(config_.reference, 0.0);
    const std::size_t depth = config_.window + 1;
    positions_.assign(depth, config_.reward_position_scale * pedal_.angle);
    references_.assign(depth, r0);
    digits_.assign(config_.window, 0.0);
  }

  ObservationHuman human_observation() const {
    ObservationHuman o;
    const double r = sample_reference(config_.reference, pedal_.time);
    o.p = pedal_.angle;
    o.e_t = r - pedal_.angle;
    o.sm_t = comfort_term(human_window()) / config_.reward_position_scale;
    o.v_prev = digit_.digit();
    o.tau_m = tau_m_;
    return o;
  }

  ObservationMachine machine_observation() const {
    ObservationMachine o;
    const double r = sample_reference(config_.reference, pedal_.time);
    o.r_p = r;
    o.p_m = pedal_.angle;
    o.e_t = r - pedal_.angle;
    o.omega = pedal_.angular_velocity;
    o.a_prev = machine_index_;
    o.tau_h = tau_h_;
    return o;
  }

  std::vector<double> human_features() const { return normalize(human_observation(), scales_); }
  std::vector<double> machine_features() const { return normalize(machine_observation(), scales_); }

  // Applies both agents' actions for one decision interval. Plant-rate
  // records are appended to `trace` when given.
  DecisionOutcome step(VRIndicator digit, int machine_action, std::vector<TraceRecord>* trace = nullptr) {
    require(!done(), "episode already finished");
    require(machine_action >= 0 && machine_action < static_cast<int>(kMachineActions),
            "machine action must be 0 or 1");
    if (machine_action != machine_index_) {
      machine_ctrl_ = switch_controller(machine_ctrl_);
      machine_index_ = machine_action;
    }
    digit_ = digit;

    const PIDGains& pid = setting_.machine_pid[static_cast<std::size_t>(machine_index_)];
    const double integral_limit = default_integral_limit(config_.plant.torque_limit, pid.ki);
    const double dt = config_.plant.dt;
    for (int i = 0; i < config_.decision_interval; ++i) {
      const double error = sample_reference(config_.reference, pedal_.time) - pedal_.angle;
      const ControlOutput u = pid_step(pid, error, machine_ctrl_, dt, integral_limit);
      machine_ctrl_ = u.state;
      tau_m_ = saturate(u.torque, config_.plant.torque_limit);

      HumanStepResult h = human_step(human_, digit_, config_.human, setting_.human_pd, dt,
                                     config_.plant.torque_limit, noise_rng_);
      human_ = std::move(h.state);
      tau_h_ = h.torque;

      pedal_ = step_plant(pedal_, tau_m_, tau_h_, config_.plant);
      ++steps_;
      if (trace) {
        trace->push_back({pedal_.time, sample_reference(config_.reference, pedal_.time), pedal_.angle,
                          pedal_.angular_velocity, tau_m_, tau_h_, digit_.digit(), machine_index_, 0.0});
      }
    }

    push_window(positions_, config_.reward_position_scale * pedal_.angle);
    push_window(references_, config_.reward_position_scale * sample_reference(config_.reference, pedal_.time));
    push_window(digits_, static_cast<double>(digit_.digit()));

    DecisionOutcome out;
    out.terms = reward_terms(human_window(), make_action_window({digits_.begin(), digits_.end()}), setting_.weights);
    out.reward = out.terms.combined;
    out.done = done();
    if (trace) trace->back().reward = out.reward;
    return out;
  }

  // Machine-only reward over the (k+1)-sample window, for callers that train
  // with it instead of the shared reward.
  double machine_only_reward() const {
    PositionWindow w{{positions_.begin(), positions_.end()}, {references_.begin(), references_.end()},
                     pedal_.angular_velocity};
    return machine_reward(w, setting_.weights.sigma, setting_.weights.beta);
  }

  bool done() const { return steps_ >= config_.episode_steps; }
  const PedalState& pedal() const { return pedal_; }
  int steps() const { return steps_; }

 private:
  // The last k samples (the history keeps k+1 for the machine reward).
  PositionWindow human_window() const {
    PositionWindow w;
    w.actual.assign(positions_.begin() + 1, positions_.end());
    w.reference.assign(references_.begin() + 1, references_.end());
    w.omega_z = pedal_.angular_velocity;
    return w;
  }

  static void push_window(std::deque<double>& window, double value) {
    window.pop_front();
    window.push_back(value);
  }

  EnvConfig config_;
  SettingConfig setting_;
  ObservationScales scales_;

  PedalState pedal_;
  HumanModelState human_;
  ControllerState machine_ctrl_;
  int machine_index_ = 0;
  VRIndicator digit_;
  double tau_m_ = 0.0;
  double tau_h_ = 0.0;
  int steps_ = 0;
  std::mt19937_64 noise_rng_;

  std::deque<double> positions_;
  std::deque<double> references_;
  std::deque<double> digits_;
};

}  // namespace coadapt
