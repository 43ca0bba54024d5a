#pragma once

// Discrete PD/PID sub-controllers and the eight two-model banks that the
// agents switch between.

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <utility>

#include "coadapt/error.hpp"
#include "coadapt/reward.hpp"

namespace coadapt {

struct PDGains {
  double kp = 0.0;
  double kd = 0.0;

  friend bool operator==(const PDGains&, const PDGains&) = default;
};

struct PIDGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;

  friend bool operator==(const PIDGains&, const PIDGains&) = default;
};

struct ControllerState {
  double integral = 0.0;    // error * s
  double prev_error = 0.0;
  bool initialized = false; // false until the first step; derivative is 0 on that step

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct ControlOutput {
  double torque = 0.0;
  ControllerState state;
};

inline constexpr double kGainEpsilon = 1e-12;

// Largest integral that keeps ki * integral within the actuator authority.
inline double default_integral_limit(double torque_limit, double ki) {
  return torque_limit / std::max(ki, kGainEpsilon);
}

inline ControlOutput pid_step(const PIDGains& gains, double error, const ControllerState& state, double dt,
                              double integral_limit = std::numeric_limits<double>::infinity()) {
  require(dt > 0.0, "controller dt must be positive");
  require_finite(error, "controller error");

  ControlOutput out;
  out.state.integral = std::clamp(state.integral + error * dt, -integral_limit, integral_limit);
  const double derivative = state.initialized ? (error - state.prev_error) / dt : 0.0;
  out.state.prev_error = error;
  out.state.initialized = true;
  out.torque = gains.kp * error + gains.ki * out.state.integral + gains.kd * derivative;
  return out;
}

inline ControlOutput pd_step(const PDGains& gains, double error, const ControllerState& state, double dt) {
  return pid_step(PIDGains{gains.kp, 0.0, gains.kd}, error, state, dt);
}

inline ControllerState reset_controller(const ControllerState& /*state*/) { return ControllerState{}; }

// Hand-over between sub-controllers of a bank: the derivative history is kept
// so the switch itself causes no kick, the integral starts over.
inline ControllerState switch_controller(const ControllerState& state) {
  ControllerState next = state;
  next.integral = 0.0;
  return next;
}

struct SettingConfig {
  int setting_id = 0;
  RewardWeights weights;
  std::array<PDGains, 2> human_pd{};    // [0] high-gain, [1] low-gain
  std::array<PIDGains, 2> machine_pid{};

  friend bool operator==(const SettingConfig&, const SettingConfig&) = default;
};

namespace detail {

inline constexpr std::array<PDGains, 2> kHumanStrong{{{30.0, 0.2}, {15.0, 0.1}}};
inline constexpr std::array<PDGains, 2> kHumanGentle{{{5.0, 0.1}, {2.5, 0.05}}};
inline constexpr std::array<PIDGains, 2> kMachineHigh{{{24.0, 2.4, 24.0}, {12.0, 1.2, 12.0}}};
inline constexpr std::array<PIDGains, 2> kMachineLow{{{12.0, 1.2, 12.0}, {6.0, 0.6, 6.0}}};

inline RewardWeights effort_weights() { return RewardWeights{1.0, 1.0, 5.0, -1.0, 0.0}; }
inline RewardWeights comfort_weights() { return RewardWeights{1.0, 8.0, 1.0, -1.0, 0.0}; }

}  // namespace detail

inline const std::array<SettingConfig, 8>& builtin_settings() {
  using namespace detail;
  static const std::array<SettingConfig, 8> table{{
      {1, effort_weights(), kHumanStrong, kMachineHigh},
      {2, effort_weights(), kHumanStrong, kMachineLow},
      {3, effort_weights(), kHumanGentle, kMachineHigh},
      {4, effort_weights(), kHumanGentle, kMachineLow},
      {5, comfort_weights(), kHumanStrong, kMachineHigh},
      {6, comfort_weights(), kHumanStrong, kMachineLow},
      {7, comfort_weights(), kHumanGentle, kMachineLow},
      {8, comfort_weights(), kHumanGentle, kMachineHigh},
  }};
  return table;
}

inline SettingConfig load_setting(int id) {
  if (id < 1 || id > 8) throw InvalidArgument("unknown setting id " + std::to_string(id) + " (expected 1..8)");
  return builtin_settings()[static_cast<std::size_t>(id - 1)];
}

}  // namespace coadapt
