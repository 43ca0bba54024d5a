#pragma once

// Synthetic patient: turns the displayed VR digit into pedalling torque.
//
// Chain per plant step:
//   digit -> reaction delay queue -> target torque (digit * unit_torque)
//   -> sub-PD on the torque error, integrated as a torque-rate command
//   -> first-order lag (muscle response) -> additive Gaussian noise
//   -> clamp to the actuator limit.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <random>
#include <string>

#include "coadapt/controllers.hpp"
#include "coadapt/error.hpp"
#include "coadapt/plant.hpp"

namespace coadapt {

class VRIndicator {
 public:
  static constexpr int kMin = -2;
  static constexpr int kMax = 2;
  static constexpr int kCount = kMax - kMin + 1;

  constexpr VRIndicator() = default;
  explicit VRIndicator(int digit) : digit_(digit) {
    require(digit >= kMin && digit <= kMax, "VR digit must lie in {-2,...,2}, got " + std::to_string(digit));
  }

  // Action index 0..4 <-> digit -2..2.
  static VRIndicator from_action(int index) { return VRIndicator(index + kMin); }
  int action_index() const { return digit_ - kMin; }
  int digit() const { return digit_; }

  friend bool operator==(VRIndicator, VRIndicator) = default;

 private:
  int digit_ = 0;
};

struct HumanModelParams {
  double unit_torque = 5.0;        // N m per digit unit
  int reaction_delay_steps = 5;    // plant steps
  double lag_time_constant = 0.2;  // s
  double noise_std = 0.2;          // N m
  std::uint64_t rng_seed = 1;

  void validate() const {
    require(unit_torque >= 0.0, "unit_torque must be non-negative");
    require(reaction_delay_steps >= 0, "reaction_delay_steps must be non-negative");
    require(lag_time_constant >= 0.0, "lag_time_constant must be non-negative");
    require(noise_std >= 0.0, "noise_std must be non-negative");
  }
};

struct HumanModelState {
  std::deque<int> delayed_digits;  // pending digits, oldest first
  double drive = 0.0;              // integrated PD command, N m
  double applied_torque = 0.0;     // lagged torque before noise, N m
  ControllerState controller;
  int active_subcontroller = 1;
};

inline HumanModelState make_human_state(const HumanModelParams& params) {
  params.validate();
  HumanModelState s;
  s.delayed_digits.assign(static_cast<std::size_t>(params.reaction_delay_steps), 0);
  return s;
}

inline double indicator_to_target(VRIndicator v, const HumanModelParams& params) {
  return static_cast<double>(v.digit()) * params.unit_torque;
}

// Digit magnitude picks the intensity (sub-PD); the sign only sets direction.
inline int select_human_subcontroller(VRIndicator v) { return std::abs(v.digit()) == 2 ? 0 : 1; }

struct HumanStepResult {
  double torque = 0.0;
  HumanModelState state;
};

inline HumanStepResult human_step(const HumanModelState& state, VRIndicator v, const HumanModelParams& params,
                                  const std::array<PDGains, 2>& bank, double dt, double torque_limit,
                                  std::mt19937_64& rng) {
  require(dt > 0.0, "human model dt must be positive");
  HumanStepResult out;
  out.state = state;
  HumanModelState& s = out.state;

  s.delayed_digits.push_back(v.digit());
  const VRIndicator effective(s.delayed_digits.front());
  s.delayed_digits.pop_front();

  const int index = select_human_subcontroller(effective);
  if (index != s.active_subcontroller) {
    s.controller = switch_controller(s.controller);
    s.active_subcontroller = index;
  }

  const double error = indicator_to_target(effective, params) - s.applied_torque;
  const ControlOutput pd = pd_step(bank[static_cast<std::size_t>(index)], error, s.controller, dt);
  s.controller = pd.state;
  s.drive = saturate(s.drive + dt * pd.torque, torque_limit);

  const double alpha = dt / (params.lag_time_constant + dt);
  s.applied_torque += alpha * (s.drive - s.applied_torque);

  double emitted = s.applied_torque;
  if (params.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, params.noise_std);
    emitted += noise(rng);
  }
  out.torque = saturate(emitted, torque_limit);
  return out;
}

}  // namespace coadapt
