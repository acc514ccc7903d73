#pragma once

#include <array>
#include <cmath>
#include <string>

#include "drift/errors.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift {

/// Slip kinematics of both axles. Component slip ratios are signed; totals are
/// their Euclidean norms. Contact-point velocities are expressed in the front
/// wheel frame (f) and the body frame (r).
struct SlipState {
  double beta = 0.0;  // sideslip angle [rad]
  double v = 0.0;     // speed [m/s]
  double sf = 0.0, sr = 0.0;
  double sfx = 0.0, sfy = 0.0, srx = 0.0, sry = 0.0;
  double vfxw = 0.0, vfyw = 0.0, vrxb = 0.0, vryb = 0.0;
};

struct AxleFriction {
  double mux = 0.0;
  double muy = 0.0;
};

struct TireForces {
  double mu_fx = 0.0, mu_fy = 0.0, mu_rx = 0.0, mu_ry = 0.0;
  double ffz = 0.0, frz = 0.0;      // normal forces [N]
  double ffxw = 0.0, ffyw = 0.0;    // front friction forces, wheel frame [N]
  double frxb = 0.0, fryb = 0.0;    // rear friction forces, body frame [N]
};

namespace detail {
// Below this speed the sideslip angle is defined as zero (atan2 is meaningless
// at standstill).
inline constexpr double kBetaSpeedGuard = 1e-6;
// Below this total slip the friction coefficients are taken at their analytic
// limit of zero.
inline constexpr double kSlipZeroGuard = 1e-9;
}  // namespace detail

/// Slip ratios and contact velocities from the current state and input.
/// omega enters the slip denominators clamped to omega_min_guard so the field
/// stays defined at standstill; the numerators keep the true relative speed,
/// so a parked vehicle with omega = 0 has zero slip.
inline SlipState compute_slip(const VehicleState& s, const ControlInput& u,
                              const VehicleParams& p) {
  if (!s.finite())
    throw IntegratorDivergence("compute_slip: non-finite state");
  SlipState out;
  out.v = s.speed();
  out.beta = out.v < detail::kBetaSpeedGuard
                 ? 0.0
                 : wrap_angle(std::atan2(s.ydot, s.xdot) - s.psi);
  const double cb = std::cos(out.beta), sb = std::sin(out.beta);
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  out.vfxw = out.v * (cb * cd + sb * sd) + s.psidot * p.lf * sd;  // v cos(beta-delta) + psidot lf sin(delta)
  out.vfyw = out.v * (sb * cd - cb * sd) + s.psidot * p.lf * cd;  // v sin(beta-delta) + psidot lf cos(delta)
  out.vrxb = out.v * cb;
  out.vryb = out.v * sb - s.psidot * p.lr;
  const double omega_den = std::max(u.omega, p.omega_min_guard);
  const double wf = omega_den * p.rf;
  const double wr = omega_den * p.rr;
  out.sfx = (out.vfxw - u.omega * p.rf) / wf;
  out.sfy = out.vfyw / wf;
  out.srx = (out.vrxb - u.omega * p.rr) / wr;
  out.sry = out.vryb / wr;
  out.sf = std::hypot(out.sfx, out.sfy);
  out.sr = std::hypot(out.srx, out.sry);
  return out;
}

/// Friction coefficients of one axle: magnitude from the model, direction
/// opposing the slip vector.
inline AxleFriction axle_friction(double s_total, double sx, double sy,
                                  const FrictionModel& model) {
  if (s_total < detail::kSlipZeroGuard) return {0.0, 0.0};
  const double mag = model.magnitude(s_total);
  return {-(sx / s_total) * mag, -(sy / s_total) * mag};
}

/// Magic Formula evaluated for both axles: mu_ij = -(s_ij/s_i) D sin(C atan(B s_i)).
inline TireForces magic_formula(const SlipState& slip, const TireParams& front,
                                const TireParams& rear) {
  TireForces f;
  const AxleFriction mf = axle_friction(slip.sf, slip.sfx, slip.sfy, FrictionModel::magic(front));
  const AxleFriction mr = axle_friction(slip.sr, slip.srx, slip.sry, FrictionModel::magic(rear));
  f.mu_fx = mf.mux;
  f.mu_fy = mf.muy;
  f.mu_rx = mr.mux;
  f.mu_ry = mr.muy;
  return f;
}

/// Quasi-static normal forces with longitudinal load transfer. The two shares
/// sum to m*g identically.
inline void normal_forces(TireForces& f, const ControlInput& u, const VehicleParams& p) {
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  const double k = f.mu_fx * cd - f.mu_fy * sd;
  const double den = p.lf + p.lr + (k - f.mu_rx) * p.h;
  const double eps_den = 0.01 * (p.lf + p.lr);
  if (!(den >= eps_den))
    throw DegenerateLoadTransfer("normal_forces: load-transfer denominator " +
                                 std::to_string(den) + " below guard");
  const double mg = p.m * p.g;
  f.ffz = (p.lr - f.mu_rx * p.h) / den * mg;
  f.frz = (p.lf + k * p.h) / den * mg;
}

/// Full tire force resolution for one (state, input) pair.
inline TireForces tire_forces(const SlipState& slip, const ControlInput& u,
                              const VehicleParams& p, const FrictionModel& front,
                              const FrictionModel& rear) {
  TireForces f;
  const AxleFriction mf = axle_friction(slip.sf, slip.sfx, slip.sfy, front);
  const AxleFriction mr = axle_friction(slip.sr, slip.srx, slip.sry, rear);
  f.mu_fx = mf.mux;
  f.mu_fy = mf.muy;
  f.mu_rx = mr.mux;
  f.mu_ry = mr.muy;
  normal_forces(f, u, p);
  f.ffxw = f.mu_fx * f.ffz;
  f.ffyw = f.mu_fy * f.ffz;
  f.frxb = f.mu_rx * f.frz;
  f.fryb = f.mu_ry * f.frz;
  return f;
}

/// Time derivative of the state under 2D rigid-body kinetics.
inline std::array<double, 6> derivatives(const VehicleState& s, const ControlInput& u,
                                         const VehicleParams& p, const FrictionModel& front,
                                         const FrictionModel& rear) {
  const SlipState slip = compute_slip(s, u, p);
  const TireForces f = tire_forces(slip, u, p, front, rear);
  const double cpd = std::cos(s.psi + u.delta), spd = std::sin(s.psi + u.delta);
  const double cp = std::cos(s.psi), sp = std::sin(s.psi);
  const double xddot =
      (f.ffxw * cpd - f.ffyw * spd + f.frxb * cp - f.fryb * sp) / p.m;
  const double yddot =
      (f.ffxw * spd + f.ffyw * cpd + f.frxb * sp + f.fryb * cp) / p.m;
  const double cd = std::cos(u.delta), sd = std::sin(u.delta);
  const double psiddot = ((f.ffyw * cd + f.ffxw * sd) * p.lf - f.fryb * p.lr) / p.Iz;
  return {s.xdot, s.ydot, s.psidot, xddot, yddot, psiddot};
}

inline std::array<double, 6> derivatives(const VehicleState& s, const ControlInput& u,
                                         const VehicleParams& p, const TireParams& front,
                                         const TireParams& rear) {
  return derivatives(s, u, p, FrictionModel::magic(front), FrictionModel::magic(rear));
}

/// One classical RK4 step with the input held constant. dt must lie in (0, 0.01] s.
inline VehicleState step(const VehicleState& s, const ControlInput& u, double dt,
                         const VehicleParams& p, const FrictionModel& front,
                         const FrictionModel& rear) {
  if (!(dt > 0.0 && dt <= 0.01))
    throw Error("step: dt must be in (0, 0.01], got " + std::to_string(dt));
  auto f = [&](const std::array<double, 6>& y) {
    return derivatives(VehicleState::from_array(y), u, p, front, rear);
  };
  const std::array<double, 6> next = rk4_step<6>(f, s.to_array(), dt);
  if (!all_finite(next))
    throw IntegratorDivergence(
        "step: non-finite state after step from x=" + std::to_string(s.x) +
        " y=" + std::to_string(s.y) + " v=" + std::to_string(s.speed()));
  return VehicleState::from_array(next);
}

inline VehicleState step(const VehicleState& s, const ControlInput& u, double dt,
                         const VehicleParams& p, const TireParams& front,
                         const TireParams& rear) {
  return step(s, u, dt, p, FrictionModel::magic(front), FrictionModel::magic(rear));
}

/// Body-frame rates of the drift coordinates (v, beta, psidot): used by the
/// steady-state residuals and the equilibrium checker.
struct BodyRates {
  double vdot = 0.0;      // [m/s^2]
  double betadot = 0.0;   // [rad/s]
  double psiddot = 0.0;   // [rad/s^2]
};

inline BodyRates body_rates(const VehicleState& s, const ControlInput& u,
                            const VehicleParams& p, const FrictionModel& front,
                            const FrictionModel& rear) {
  const std::array<double, 6> d = derivatives(s, u, p, front, rear);
  const double v = s.speed();
  const double chi = std::atan2(s.ydot, s.xdot);  // course angle
  const double cc = std::cos(chi), sc = std::sin(chi);
  BodyRates r;
  r.vdot = d[3] * cc + d[4] * sc;
  r.betadot = v > 0.0 ? (-d[3] * sc + d[4] * cc) / v - s.psidot : 0.0;
  r.psiddot = d[5];
  return r;
}

}  // namespace drift
