#include <gtest/gtest.h>

#include <cmath>

#include "coadapt/controllers.hpp"
#include "coadapt/plant.hpp"
#include "gen.hpp"

using namespace coadapt;

namespace {

void expect_pd(const PDGains& g, double kp, double kd) {
  EXPECT_EQ(g.kp, kp);
  EXPECT_EQ(g.kd, kd);
}

void expect_pid(const PIDGains& g, double kp, double ki, double kd) {
  EXPECT_EQ(g.kp, kp);
  EXPECT_EQ(g.ki, ki);
  EXPECT_EQ(g.kd, kd);
}

// Tracking MSE of a PID alone on the default sinusoid, no human torque.
double passive_tracking_mse(const PIDGains& gains, int steps = 800) {
  PlantParams p;
  ReferenceTrajectory r;
  PedalState s;
  ControllerState c;
  double sum = 0;
  for (int i = 0; i < steps; ++i) {
    const auto u = pid_step(gains, sample_reference(r, s.time) - s.angle, c, p.dt,
                            default_integral_limit(p.torque_limit, gains.ki));
    c = u.state;
    s = step_plant(s, u.torque, 0.0, p);
    const double e = s.angle - sample_reference(r, s.time);
    sum += e * e;
  }
  return sum / steps;
}

}  // namespace

TEST(Settings, Row1) {
  const auto s = load_setting(1);
  EXPECT_EQ(s.setting_id, 1);
  EXPECT_EQ(s.weights.mu, 1);
  EXPECT_EQ(s.weights.kappa, 1);
  EXPECT_EQ(s.weights.rho, 5);
  expect_pd(s.human_pd[0], 30, 0.2);
  expect_pd(s.human_pd[1], 15, 0.1);
  expect_pid(s.machine_pid[0], 24, 2.4, 24);
  expect_pid(s.machine_pid[1], 12, 1.2, 12);
}

TEST(Settings, Row4) {
  const auto s = load_setting(4);
  EXPECT_EQ(s.weights.rho, 5);
  EXPECT_EQ(s.weights.kappa, 1);
  expect_pd(s.human_pd[0], 5, 0.1);
  expect_pd(s.human_pd[1], 2.5, 0.05);
  expect_pid(s.machine_pid[0], 12, 1.2, 12);
  expect_pid(s.machine_pid[1], 6, 0.6, 6);
}

TEST(Settings, Row8) {
  const auto s = load_setting(8);
  EXPECT_EQ(s.weights.mu, 1);
  EXPECT_EQ(s.weights.kappa, 8);
  EXPECT_EQ(s.weights.rho, 1);
  expect_pd(s.human_pd[0], 5, 0.1);
  expect_pd(s.human_pd[1], 2.5, 0.05);
  expect_pid(s.machine_pid[0], 24, 2.4, 24);
  expect_pid(s.machine_pid[1], 12, 1.2, 12);
}

TEST(Settings, IdsUniqueAndWeightsNonNegative) {
  for (int i = 1; i <= 8; ++i) {
    const auto s = load_setting(i);
    EXPECT_EQ(s.setting_id, i);
    EXPECT_GE(s.weights.mu, 0);
    EXPECT_GE(s.weights.kappa, 0);
    EXPECT_GE(s.weights.rho, 0);
  }
}

TEST(Settings, UnknownIdRejected) {
  EXPECT_THROW(load_setting(0), InvalidArgument);
  EXPECT_THROW(load_setting(9), InvalidArgument);
}

TEST(Pid, ProportionalOnly) {
  EXPECT_DOUBLE_EQ(pid_step({12, 0, 0}, 0.5, {}, 0.01).torque, 6.0);
}

TEST(Pid, ZeroErrorFixedPoint) {
  ControllerState s;
  for (int i = 0; i < 100; ++i) {
    const auto u = pid_step({24, 2.4, 24}, 0.0, s, 0.01);
    EXPECT_EQ(u.torque, 0.0);
    s = u.state;
  }
}

TEST(Pid, IntegralAccumulates) {
  ControllerState s;
  const double expected[] = {0.01, 0.02, 0.03};
  for (double e : expected) {
    const auto u = pid_step({0, 1, 0}, 1.0, s, 0.01);
    EXPECT_NEAR(u.torque, e, 1e-15);
    s = u.state;
  }
}

TEST(Pid, FirstStepHasNoDerivativeKick) {
  EXPECT_EQ(pid_step({0, 0, 100}, 3.0, {}, 0.01).torque, 0.0);
}

TEST(Pid, NonFiniteErrorRejected) {
  EXPECT_THROW(pid_step({1, 1, 1}, NAN, {}, 0.01), InvalidArgument);
  EXPECT_THROW(pid_step({1, 1, 1}, 0.1, {}, 0.0), InvalidArgument);
}

TEST(Pd, ProportionalWithFlatError) {
  ControllerState s{0, 0.1, true};
  EXPECT_NEAR(pd_step({30, 0.2}, 0.1, s, 0.01).torque, 3.0, 1e-14);
}

TEST(Pd, ZeroFromFresh) { EXPECT_EQ(pd_step({30, 0.2}, 0, {}, 0.01).torque, 0.0); }

TEST(Pd, DerivativeOfStep) {
  const auto first = pd_step({0, 0.2}, 0.0, {}, 0.1);
  EXPECT_NEAR(pd_step({0, 0.2}, 0.1, first.state, 0.1).torque, 0.2, 1e-15);
}

TEST(Reset, ZeroesState) {
  const ControllerState z = reset_controller(ControllerState{3.0, -1.0, true});
  EXPECT_EQ(z.integral, 0);
  EXPECT_EQ(z.prev_error, 0);
  EXPECT_FALSE(z.initialized);
}

TEST(Reset, ThenStepMatchesFresh) {
  ControllerState s;
  for (double e : {0.3, -0.2, 0.5}) s = pid_step({5, 2, 1}, e, s, 0.01).state;
  const auto a = pid_step({5, 2, 1}, 0.7, reset_controller(s), 0.01);
  const auto b = pid_step({5, 2, 1}, 0.7, ControllerState{}, 0.01);
  EXPECT_EQ(a.torque, b.torque);
}

TEST(Switch, CarriesDerivativeHistory) {
  const PIDGains a{24, 2.4, 24}, b{12, 1.2, 12};
  const double dt = 0.01;
  ControllerState s;
  for (int i = 0; i < 5; ++i) s = pid_step(a, 0.1 + 0.01 * i, s, dt).state;
  // Error keeps its slope across the switch: the derivative term is the
  // slope, not (e - 0)/dt.
  const double e = 0.1 + 0.01 * 5;
  const auto switched = pid_step(b, e, switch_controller(s), dt);
  EXPECT_EQ(switched.state.integral, e * dt);
  EXPECT_NEAR(switched.torque, b.kp * e + b.ki * e * dt + b.kd * 0.01 / dt, 1e-12);

  // Flat error: no derivative at all after the switch.
  ControllerState flat;
  for (int i = 0; i < 5; ++i) flat = pid_step(a, 0.2, flat, dt).state;
  const auto u = pid_step(b, 0.2, switch_controller(flat), dt);
  EXPECT_NEAR(u.torque, b.kp * 0.2 + b.ki * 0.2 * dt, 1e-14);
}

TEST(PidProperty, PureProportionalIsExact) {
  testgen::Gen g(21);
  for (int i = 0; i < 1000; ++i) {
    const double kp = g.uniform(0, 50), e = g.uniform(-5, 5);
    ControllerState s{g.uniform(-1, 1), g.uniform(-1, 1), g.coin()};
    EXPECT_EQ(pid_step({kp, 0, 0}, e, s, g.uniform(1e-4, 0.1)).torque, kp * e);
  }
}

TEST(PidProperty, AntiWindupBoundsIntegralContribution) {
  testgen::Gen g(22);
  for (int trial = 0; trial < 100; ++trial) {
    const PIDGains gains{0, g.uniform(0.1, 5), 0};
    const double limit = default_integral_limit(30, gains.ki);
    const double e = g.uniform(-10, 10);
    ControllerState s;
    for (int i = 0; i < 2000; ++i) {
      const auto u = pid_step(gains, e, s, 0.05, limit);
      ASSERT_LE(std::abs(u.state.integral), limit);
      ASSERT_LE(std::abs(u.torque), gains.ki * limit + 1e-12);
      s = u.state;
    }
  }
}

TEST(PidProperty, PdIsPidWithoutIntegral) {
  testgen::Gen g(23);
  for (int i = 0; i < 1000; ++i) {
    const PDGains pd{g.uniform(0, 40), g.uniform(0, 1)};
    const ControllerState s{g.uniform(-1, 1), g.uniform(-1, 1), g.coin()};
    const double e = g.uniform(-2, 2), dt = g.uniform(1e-3, 0.1);
    const auto a = pd_step(pd, e, s, dt);
    const auto b = pid_step({pd.kp, 0, pd.kd}, e, s, dt);
    EXPECT_EQ(a.torque, b.torque);
    EXPECT_EQ(a.state.prev_error, b.state.prev_error);
  }
}

TEST(Bank, HigherMachineGainsTrackBetter) {
  const double high = passive_tracking_mse({24, 2.4, 24});
  const double mid = passive_tracking_mse({12, 1.2, 12});
  const double low = passive_tracking_mse({6, 0.6, 6});
  EXPECT_LT(high, mid);
  EXPECT_LT(mid, low);
}
