#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "coadapt/human_model.hpp"
#include "gen.hpp"

using namespace coadapt;

namespace {

const auto kStrong = load_setting(1).human_pd;
constexpr double kDt = 0.01;
constexpr double kLimit = 30.0;

std::vector<double> run(const std::vector<int>& digits, HumanModelParams p, const std::array<PDGains, 2>& bank,
                        std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  HumanModelState s = make_human_state(p);
  std::vector<double> out;
  for (int d : digits) {
    auto r = human_step(s, VRIndicator(d), p, bank, kDt, kLimit, rng);
    out.push_back(r.torque);
    s = std::move(r.state);
  }
  return out;
}

HumanModelParams quiet(int delay = 0, double lag = 0.0) {
  HumanModelParams p;
  p.noise_std = 0;
  p.reaction_delay_steps = delay;
  p.lag_time_constant = lag;
  return p;
}

}  // namespace

TEST(Indicator, TargetTorque) {
  HumanModelParams p;
  EXPECT_EQ(indicator_to_target(VRIndicator(0), p), 0.0);
  EXPECT_EQ(indicator_to_target(VRIndicator(-2), p), -10.0);
  EXPECT_EQ(indicator_to_target(VRIndicator(1), p), -indicator_to_target(VRIndicator(-1), p));
}

TEST(Indicator, SubcontrollerByMagnitude) {
  EXPECT_EQ(select_human_subcontroller(VRIndicator(2)), 0);
  EXPECT_EQ(select_human_subcontroller(VRIndicator(-2)), 0);
  EXPECT_EQ(select_human_subcontroller(VRIndicator(1)), 1);
  EXPECT_EQ(select_human_subcontroller(VRIndicator(0)), 1);
  for (int d = -2; d <= 2; ++d)
    EXPECT_EQ(select_human_subcontroller(VRIndicator(d)), select_human_subcontroller(VRIndicator(-d)));
}

TEST(Indicator, RangeChecked) {
  EXPECT_THROW(VRIndicator(3), InvalidArgument);
  EXPECT_THROW(VRIndicator(-3), InvalidArgument);
  for (int a = 0; a < VRIndicator::kCount; ++a) EXPECT_EQ(VRIndicator::from_action(a).action_index(), a);
}

TEST(HumanStep, RestStaysAtZero) {
  const auto out = run(std::vector<int>(500, 0), quiet(5, 0.2), kStrong);
  for (double t : out) EXPECT_EQ(t, 0.0);
}

TEST(HumanStep, NoLagMatchesClosedForm) {
  // lag 0, kd 0: drive_n = T (1 - (1 - dt kp)^n)
  const std::array<PDGains, 2> bank{{{30, 0}, {15, 0}}};
  const auto p = quiet();
  const auto out = run(std::vector<int>(300, 1), p, bank);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double expected = p.unit_torque * (1 - std::pow(1 - kDt * 15, static_cast<double>(n + 1)));
    EXPECT_NEAR(out[n], expected, 1e-12);
  }
}

TEST(HumanStep, ConvergesMonotonicallyWithDefaultGains) {
  const auto p = quiet();
  const auto out = run(std::vector<int>(2000, 1), p, kStrong);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i], out[i - 1]);
  EXPECT_NEAR(out.back(), p.unit_torque, 1e-9);
}

TEST(HumanStep, ReactionDelay) {
  std::vector<int> digits(20, 0);
  for (std::size_t i = 7; i < digits.size(); ++i) digits[i] = 2;
  const auto out = run(digits, quiet(3, 0.2), kStrong);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], 0.0) << i;
  EXPECT_GT(out[10], 0.0);
}

TEST(HumanStep, QueueLengthEqualsDelay) {
  HumanModelParams p = quiet(4);
  std::mt19937_64 rng(1);
  HumanModelState s = make_human_state(p);
  for (int i = 0; i < 10; ++i) {
    s = human_step(s, VRIndicator(i % 5 - 2), p, kStrong, kDt, kLimit, rng).state;
    EXPECT_EQ(s.delayed_digits.size(), 4u);
  }
}

TEST(HumanStep, BadParamsRejected) {
  HumanModelParams p;
  p.noise_std = -1;
  EXPECT_THROW(make_human_state(p), InvalidArgument);
  p = {};
  p.reaction_delay_steps = -1;
  EXPECT_THROW(make_human_state(p), InvalidArgument);
}

TEST(HumanProperty, TorqueWithinLimit) {
  testgen::Gen g(31);
  for (int trial = 0; trial < 50; ++trial) {
    HumanModelParams p;
    p.unit_torque = g.uniform(0, 40);
    p.noise_std = g.uniform(0, 20);
    p.reaction_delay_steps = g.integer(0, 8);
    p.lag_time_constant = g.uniform(0, 0.5);
    std::vector<int> digits(400);
    for (auto& d : digits) d = g.integer(-2, 2);
    for (double t : run(digits, p, kStrong, g.u64())) ASSERT_LE(std::abs(t), kLimit);
  }
}

TEST(HumanProperty, SeededNoiseReproducible) {
  testgen::Gen g(32);
  std::vector<int> digits(300);
  for (auto& d : digits) d = g.integer(-2, 2);
  HumanModelParams p;
  EXPECT_EQ(run(digits, p, kStrong, 99), run(digits, p, kStrong, 99));
  EXPECT_NE(run(digits, p, kStrong, 99), run(digits, p, kStrong, 100));
}

TEST(HumanProperty, SignEquivariantWithoutNoise) {
  testgen::Gen g(33);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> digits(300), neg(300);
    for (std::size_t i = 0; i < digits.size(); ++i) {
      digits[i] = g.integer(-2, 2);
      neg[i] = -digits[i];
    }
    const auto p = quiet(g.integer(0, 6), g.uniform(0, 0.4));
    const auto a = run(digits, p, kStrong), b = run(neg, p, kStrong);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], -b[i]);
  }
}
