#include "drift/equilibrium.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"

using namespace drift;
using namespace drift::testing;

namespace {

const EquilibriumSeed kHandSeed{3.1, -kPi / 3.0, 0.04, 130.0};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

}  // namespace

TEST(SolveEquilibrium, SatisfiesCircularKinematics) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  DriftEquilibrium eq = solve_equilibrium(0.1, fm, fm, p, kHandSeed);
  EXPECT_NEAR(eq.psidot, eq.v * eq.kappa, 1e-8);
  EXPECT_NEAR(eq.beta, -kPi / 3.0, 1e-10);
  EXPECT_LT(eq.residual_norm, 1e-8);
  EXPECT_GT(std::abs(eq.beta), kPi / 6.0);
}

TEST(SolveEquilibrium, IndependentResidualCheck) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  DriftEquilibrium eq = solve_equilibrium(0.1, fm, fm, p, kHandSeed);
  EXPECT_LT(verify_equilibrium(eq, p, fm, fm), 1e-8);
}

TEST(SolveEquilibrium, BodyFrameDerivativesVanish) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::magic(paper_tire());
  DriftEquilibrium eq = solve_equilibrium(0.1, fm, fm, p, kHandSeed);
  VehicleState s;
  s.xdot = eq.v * std::cos(eq.beta);
  s.ydot = eq.v * std::sin(eq.beta);
  s.psidot = eq.psidot;
  BodyRates r = body_rates(s, {eq.delta_ff, eq.omega_ff}, p, fm, fm);
  EXPECT_LT(std::abs(r.vdot), 1e-6);
  EXPECT_LT(std::abs(r.betadot), 1e-6);
  EXPECT_LT(std::abs(r.psiddot), 1e-6);
}

TEST(SolveEquilibrium, OpenLoopRolloutHoldsCurvature) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  DriftEquilibrium eq = solve_equilibrium(0.1, fm, fm, p, kHandSeed);
  VehicleState s;
  s.xdot = eq.v * std::cos(eq.beta);
  s.ydot = eq.v * std::sin(eq.beta);
  s.psidot = eq.psidot;
  const ControlInput u{eq.delta_ff, eq.omega_ff};
  double arc = 0.0;
  const double chi0 = std::atan2(s.ydot, s.xdot);
  double chi_prev = chi0, turns = 0.0;
  for (int i = 0; i < 1000; ++i) {
    s = step(s, u, 1e-3, p, fm, fm);
    arc += s.speed() * 1e-3;
    const double chi = std::atan2(s.ydot, s.xdot);
    turns += wrap_angle(chi - chi_prev);
    chi_prev = chi;
  }
  const double kappa_path = turns / arc;
  EXPECT_NEAR(kappa_path, eq.kappa, 0.02 * eq.kappa);
}

TEST(SolveEquilibrium, ContinuationConvergesFast) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  DriftEquilibrium eq10 = solve_equilibrium(0.10, fm, fm, p, kHandSeed);
  DriftEquilibrium eq11 = solve_equilibrium(
      0.11, fm, fm, p, {eq10.v, eq10.beta, eq10.delta_ff, eq10.omega_ff});
  EXPECT_LT(eq11.newton_iters, 10);
  EXPECT_LT(eq11.residual_norm, 1e-8);
}

TEST(SolveEquilibrium, GripSeedRejected) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  EXPECT_THROW(solve_equilibrium(0.1, fm, fm, p, {3.0, -0.1, 0.0, 60.0}), BranchCapture);
}

TEST(SolveEquilibrium, BadKappaRejected) {
  VehicleParams p;
  const FrictionModel fm = FrictionModel::constant(0.1);
  EXPECT_THROW(solve_equilibrium(0.0, fm, fm, p, kHandSeed), Error);
}

TEST(BuildTable, SpecGridFullyFeasible) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  EXPECT_EQ(t.feasible_fraction(), 1.0);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const TableCell& c = t.at(i, j);
      const FrictionModel fm = FrictionModel::constant(t.mu_grid[i]);
      EXPECT_LT(verify_equilibrium(c.eq, p, fm, fm), 1e-8);
      EXPECT_NEAR(c.eq.psidot, c.eq.v * c.eq.kappa, 1e-8);
      EXPECT_GT(std::abs(c.eq.beta), kPi / 6.0);
    }
}

TEST(BuildTable, SpeedMonotoneInMu) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  for (std::size_t j = 0; j < t.cols(); ++j)
    for (std::size_t i = 0; i + 1 < t.rows(); ++i)
      EXPECT_LE(t.at(i, j).eq.v, t.at(i + 1, j).eq.v + 1e-12)
          << "mu " << t.mu_grid[i] << " kappa " << t.kappa_grid[j];
}

TEST(BuildTable, RejectsBadGrids) {
  VehicleParams p;
  EXPECT_THROW(build_table({}, {0.1}, p, kHandSeed), Error);
  EXPECT_THROW(build_table({0.1, 0.1}, {0.1}, p, kHandSeed), Error);
  EXPECT_THROW(build_table({0.1, 0.09}, {0.1}, p, kHandSeed), Error);
}

TEST(TableSerialization, RoundTripsBitExact) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.08, 0.12, 3), linspace(0.09, 0.12, 4), p,
                                   kHandSeed);
  std::stringstream ss;
  save_table(t, ss);
  const std::string first = ss.str();
  EquilibriumTable back = load_table(ss);
  EXPECT_TRUE(back == t);
  std::stringstream ss2;
  save_table(back, ss2);
  EXPECT_EQ(first, ss2.str());
}

TEST(TableSerialization, RejectsGarbage) {
  std::stringstream ss;
  ss << "not a table";
  EXPECT_THROW(load_table(ss), Error);
}

TEST(Lookup, ExactAtGridNodes) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      FeedforwardResult ff = lookup_feedforward(t, t.mu_grid[i], t.kappa_grid[j]);
      EXPECT_EQ(ff.delta_ff, t.at(i, j).eq.delta_ff);
      EXPECT_EQ(ff.omega_ff, t.at(i, j).eq.omega_ff);
      EXPECT_FALSE(ff.clamped);
    }
}

TEST(Lookup, MidpointIsMean) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  const double kmid = 0.5 * (t.kappa_grid[1] + t.kappa_grid[2]);
  FeedforwardResult ff = lookup_feedforward(t, t.mu_grid[2], kmid);
  EXPECT_NEAR(ff.delta_ff,
              0.5 * (t.at(2, 1).eq.delta_ff + t.at(2, 2).eq.delta_ff), 1e-12);
  EXPECT_NEAR(ff.omega_ff,
              0.5 * (t.at(2, 1).eq.omega_ff + t.at(2, 2).eq.omega_ff), 1e-12);
}

TEST(Lookup, InterpolationCrossValidatesAgainstSolver) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  const double mu = 0.0925, kappa = 0.1125;  // off-grid query
  FeedforwardResult ff = lookup_feedforward(t, mu, kappa);
  const FrictionModel fm = FrictionModel::constant(mu);
  DriftEquilibrium eq = solve_equilibrium(kappa, fm, fm, p, kHandSeed);
  EXPECT_NEAR(ff.delta_ff, eq.delta_ff, 0.10 * std::abs(eq.delta_ff));
  EXPECT_NEAR(ff.omega_ff, eq.omega_ff, 0.10 * eq.omega_ff);
}

TEST(Lookup, OutOfRangeClampsWithFlag) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  FeedforwardResult lo = lookup_feedforward(t, 0.02, 0.1);
  EXPECT_TRUE(lo.clamped);
  FeedforwardResult node = lookup_feedforward(t, 0.07, 0.1);
  EXPECT_FALSE(node.clamped);
  FeedforwardResult hi = lookup_feedforward(t, 0.12, 0.2);
  EXPECT_TRUE(hi.clamped);
  EXPECT_EQ(hi.omega_ff, lookup_feedforward(t, 0.12, 0.14).omega_ff);
}

TEST(Lookup, InfeasibleCellsNeverInterpolated) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  t.at(2, 2).feasible = false;  // poke a hole mid-grid
  const double mu = 0.5 * (t.mu_grid[2] + t.mu_grid[3]);
  const double kappa = 0.5 * (t.kappa_grid[2] + t.kappa_grid[3]);
  FeedforwardResult ff = lookup_feedforward(t, mu, kappa);
  EXPECT_TRUE(ff.infeasible_fallback);
  bool matches_a_node = false;
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j)
      if (t.at(i, j).feasible && ff.omega_ff == t.at(i, j).eq.omega_ff)
        matches_a_node = true;
  EXPECT_TRUE(matches_a_node);
}

TEST(TableQualityCheck, ThrowsBelowThreshold) {
  VehicleParams p;
  EquilibriumTable t = build_table(linspace(0.07, 0.12, 5), linspace(0.08, 0.14, 5), p,
                                   kHandSeed);
  for (auto& c : t.cells) c.feasible = false;
  EXPECT_THROW(require_table_quality(t), TableQuality);
}
