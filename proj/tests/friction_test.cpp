#include "drift/friction_estimator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "drift/equilibrium.hpp"
#include "helpers.hpp"

using namespace drift;
using namespace drift::testing;

namespace {

/// Window recorded at 100 Hz from a rollout under the given friction models.
std::vector<WindowSample> rollout_window(const VehicleState& s0, const ControlInput& u,
                                         const VehicleParams& p, const FrictionModel& fm,
                                         int samples, double dt = 0.01) {
  std::vector<WindowSample> w;
  VehicleState s = s0;
  for (int i = 0; i < samples; ++i) {
    w.push_back({s, u, i * dt});
    for (int k = 0; k < 10; ++k) s = step(s, u, dt / 10.0, p, fm, fm);
  }
  return w;
}

}  // namespace

TEST(FrictionEstimator, RecoversSurrogateMu) {
  VehicleParams p;
  const double mu_true = 0.12;
  const FrictionModel fm = FrictionModel::constant(mu_true);
  DriftEquilibrium eq = solve_equilibrium(0.1, fm, fm, p, {3.1, -kPi / 3, 0.04, 130.0});
  VehicleState s0;
  s0.xdot = eq.v * std::cos(eq.beta);
  s0.ydot = eq.v * std::sin(eq.beta);
  s0.psidot = eq.psidot;
  auto w = rollout_window(s0, {eq.delta_ff, eq.omega_ff}, p, fm, 50);
  FrictionEstimate est = estimate_friction(w, p);
  EXPECT_NEAR(est.mu, mu_true, 0.005);
}

TEST(FrictionEstimator, SaturatedDriftMatchesOperatingFriction) {
  VehicleParams p;
  const FrictionModel mf = FrictionModel::magic(paper_tire());
  DriftEquilibrium eq = solve_equilibrium(0.1, mf, mf, p, {3.1, -kPi / 3, 0.04, 130.0});
  VehicleState s0;
  s0.xdot = eq.v * std::cos(eq.beta);
  s0.ydot = eq.v * std::sin(eq.beta);
  s0.psidot = eq.psidot;
  auto w = rollout_window(s0, {eq.delta_ff, eq.omega_ff}, p, mf, 50);

  // Oracle: the Magic Formula magnitude actually exercised along the rollout.
  double mu_op = 0.0;
  for (const auto& s : w) {
    const SlipState slip = compute_slip(s.state, s.input, p);
    mu_op += 0.5 * (mf.magnitude(slip.sf) + mf.magnitude(slip.sr));
  }
  mu_op /= static_cast<double>(w.size());

  FrictionEstimate est = estimate_friction(w, p);
  EXPECT_NEAR(est.mu, mu_op, 0.15 * mu_op);
  // The paper's operating point: around 0.12 for B=5, C=2, D=0.3.
  EXPECT_GT(est.mu, 0.09);
  EXPECT_LT(est.mu, 0.16);
}

TEST(FrictionEstimator, StationaryWindowUnidentifiable) {
  VehicleParams p;
  std::vector<WindowSample> w;
  for (int i = 0; i < 10; ++i) w.push_back({VehicleState{}, ControlInput{}, i * 0.01});
  EXPECT_THROW(estimate_friction(w, p), UnidentifiableFriction);
}

TEST(FrictionEstimator, LossAtOptimumBelowBounds) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.08);
  DriftEquilibrium eq = solve_equilibrium(0.11, fm, fm, p, {2.8, -kPi / 3, 0.03, 110.0});
  VehicleState s0;
  s0.xdot = eq.v * std::cos(eq.beta);
  s0.ydot = eq.v * std::sin(eq.beta);
  s0.psidot = eq.psidot;
  auto w = rollout_window(s0, {eq.delta_ff, eq.omega_ff}, p, fm, 30);
  FrictionEstimatorConfig cfg;
  FrictionEstimate est = estimate_friction(w, p, cfg);
  EXPECT_LE(est.loss, friction_loss(w, p, cfg.mu_lo));
  EXPECT_LE(est.loss, friction_loss(w, p, cfg.mu_hi));
}

TEST(FrictionEstimator, TooFewSamplesThrows) {
  VehicleParams p;
  std::vector<WindowSample> w{{VehicleState{}, ControlInput{}, 0.0}};
  EXPECT_THROW(estimate_friction(w, p), Error);
}
