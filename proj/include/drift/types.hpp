#pragma once

#include <array>
#include <cmath>

#include "drift/numeric.hpp"

namespace drift {

/// Planar rigid-body state. psi is kept unwrapped; nothing in the integrator
/// reduces it modulo 2*pi.
struct VehicleState {
  double x = 0.0;       // [m]
  double y = 0.0;       // [m]
  double psi = 0.0;     // heading [rad], unwrapped
  double xdot = 0.0;    // inertial velocity [m/s]
  double ydot = 0.0;    // [m/s]
  double psidot = 0.0;  // yaw rate [rad/s]

  std::array<double, 6> to_array() const { return {x, y, psi, xdot, ydot, psidot}; }
  static VehicleState from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }

  double speed() const { return std::hypot(xdot, ydot); }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(psi) &&
           std::isfinite(xdot) && std::isfinite(ydot) && std::isfinite(psidot);
  }
};

/// Front steering angle and common wheel rotational speed (all wheels are
/// driven at the same speed).
struct ControlInput {
  double delta = 0.0;  // steering [rad], positive left
  double omega = 0.0;  // wheel speed [rad/s], non-negative
};

struct VehicleParams {
  double m = 2.5;                // mass [kg]
  double Iz = 0.045;             // yaw inertia [kg m^2]
  double lf = 0.16;              // CoM to front axle [m]
  double lr = 0.14;              // CoM to rear axle [m]
  double rf = 0.05;              // front wheel radius [m]
  double rr = 0.05;              // rear wheel radius [m]
  double h = 0.04;               // CoM height [m]
  double g = 9.81;               // [m/s^2]
  double delta_max = 0.6;        // steering limit [rad]
  double omega_max = 180.0;      // wheel speed limit [rad/s]
  double omega_min_guard = 1.0;  // slip-denominator guard [rad/s]

  ControlInput clamp(const ControlInput& u) const {
    return {drift::clamp(u.delta, -delta_max, delta_max),
            drift::clamp(u.omega, 0.0, omega_max)};
  }
};

/// Magic Formula coefficients. B and C are dimensionless shape factors, D is
/// the peak friction coefficient.
struct TireParams {
  double B = 5.0;
  double C = 2.0;
  double D = 0.3;
};

/// Friction magnitude law for one axle: either the full Magic Formula or the
/// constant-mu surrogate used by the friction estimator and the default
/// equilibrium table.
struct FrictionModel {
  enum class Kind { magic_formula, constant_mu };

  Kind kind = Kind::magic_formula;
  TireParams tire{};
  double mu = 0.1;

  static FrictionModel magic(const TireParams& t) {
    return {Kind::magic_formula, t, 0.0};
  }
  static FrictionModel constant(double mu_value) {
    return {Kind::constant_mu, {}, mu_value};
  }

  /// |mu| as a function of total slip ratio.
  double magnitude(double s_total) const {
    if (kind == Kind::constant_mu) return mu;
    return tire.D * std::sin(tire.C * std::atan(tire.B * s_total));
  }
};

}  // namespace drift
