#pragma once

#include <array>
#include <cmath>

#include "drift/dynamics.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift::testing {

inline VehicleParams default_params() { return VehicleParams{}; }

inline TireParams paper_tire() { return TireParams{5.0, 2.0, 0.3}; }
inline TireParams slick_tire() { return TireParams{4.0, 2.0, 0.15}; }

/// State moving at speed v along course angle chi with heading psi.
inline VehicleState moving_state(double v, double chi, double psi, double psidot,
                                 double x = 0.0, double y = 0.0) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.psi = psi;
  s.xdot = v * std::cos(chi);
  s.ydot = v * std::sin(chi);
  s.psidot = psidot;
  return s;
}

/// A representative deep-drift state (counter-clockwise, nose-in).
inline VehicleState drift_state() {
  const double v = 3.4, beta = -kPi / 3.0, psi = 0.5;
  return moving_state(v, psi + beta, psi, 0.34);
}

struct RandomDraw {
  VehicleState state;
  ControlInput input;
};

/// Random (state, input) over the reachable envelope used by the invariant
/// suites.
inline RandomDraw random_draw(Rng& rng, const VehicleParams& p) {
  RandomDraw d;
  d.state.x = rng.uniform(-20.0, 20.0);
  d.state.y = rng.uniform(-20.0, 20.0);
  d.state.psi = rng.uniform(-10.0, 10.0);
  d.state.xdot = rng.uniform(-5.0, 5.0);
  d.state.ydot = rng.uniform(-5.0, 5.0);
  d.state.psidot = rng.uniform(-8.0, 8.0);
  d.input.delta = rng.uniform(-p.delta_max, p.delta_max);
  d.input.omega = rng.uniform(0.0, p.omega_max);
  return d;
}

}  // namespace drift::testing
