#pragma once

// One-degree-of-freedom pedal: an inertia-damper driven by the sum of a
// machine torque and a human torque, with hard mechanical stops.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coadapt/error.hpp"

namespace coadapt {

struct PedalState {
  double angle = 0.0;             // rad
  double angular_velocity = 0.0;  // rad/s
  double time = 0.0;              // s

  friend bool operator==(const PedalState&, const PedalState&) = default;
};

struct PlantParams {
  double inertia = 0.2;       // kg m^2
  double damping = 0.5;       // N m s / rad
  double torque_limit = 30.0; // N m, per actuator
  double dt = 0.01;           // s
  double angle_min = -1.0;    // rad
  double angle_max = 1.0;     // rad
  double omega_max = 20.0;    // rad/s

  void validate() const {
    require(inertia > 0.0, "plant inertia must be positive");
    require(damping >= 0.0, "plant damping must be non-negative");
    require(torque_limit > 0.0, "plant torque_limit must be positive");
    require(dt > 0.0, "plant dt must be positive");
    require(angle_min < angle_max, "plant angle_min must be below angle_max");
    require(omega_max > 0.0, "plant omega_max must be positive");
  }
};

// Sinusoidal dorsiflexion/plantarflexion cycle.
struct ReferenceTrajectory {
  double amplitude = 0.3;  // rad
  double period = 4.0;     // s
  double phase = 0.0;      // rad
  double offset = 0.0;     // rad

  void validate() const {
    require(amplitude >= 0.0, "reference amplitude must be non-negative");
    require(period > 0.0, "reference period must be positive");
  }

  void validate_against(const PlantParams& plant) const {
    validate();
    require(offset - amplitude >= plant.angle_min && offset + amplitude <= plant.angle_max,
            "reference trajectory leaves the plant angle limits");
  }
};

inline double sample_reference(const ReferenceTrajectory& traj, double t) {
  require(t >= 0.0, "reference time must be non-negative");
  return traj.offset + traj.amplitude * std::sin(2.0 * std::numbers::pi * t / traj.period + traj.phase);
}

inline double saturate(double value, double limit) { return std::clamp(value, -limit, limit); }

// Semi-implicit Euler: velocity first, then angle from the updated velocity.
// Contact with a stop is inelastic.
inline PedalState step_plant(const PedalState& state, double tau_machine, double tau_human,
                             const PlantParams& params) {
  require_finite(tau_machine, "machine torque");
  require_finite(tau_human, "human torque");
  const double net = saturate(tau_machine, params.torque_limit) + saturate(tau_human, params.torque_limit) -
                     params.damping * state.angular_velocity;

  PedalState next;
  next.angular_velocity = saturate(state.angular_velocity + params.dt * net / params.inertia, params.omega_max);
  next.angle = state.angle + params.dt * next.angular_velocity;
  if (next.angle <= params.angle_min) {
    next.angle = params.angle_min;
    next.angular_velocity = 0.0;
  } else if (next.angle >= params.angle_max) {
    next.angle = params.angle_max;
    next.angular_velocity = 0.0;
  }
  next.time = state.time + params.dt;
  return next;
}

}  // namespace coadapt
