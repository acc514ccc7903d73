#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drift/errors.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift {

/// Circumnavigation target: expected center (instantaneous position for
/// moving-center tasks), expected radius, and curvature adjustment rate.
struct CenterTarget {
  double cx = 0.0;
  double cy = 0.0;
  double R_exp = 10.0;
  double gamma = 0.5;

  double kappa0() const { return 1.0 / R_exp; }
};

struct PolarState {
  double d = 0.0;    // distance to center [m]
  double phi = 0.0;  // bearing offset, wrapped to (-pi, pi]
};

/// phi = atan2(ydot, xdot) - atan2(y - Cy, x - Cx), wrapped to (-pi, pi].
inline double bearing_phi(const VehicleState& s, const CenterTarget& c,
                          double v_min = 0.1) {
  const double dx = s.x - c.cx, dy = s.y - c.cy;
  if (s.speed() <= v_min)
    throw UndefinedBearing("bearing_phi: speed " + std::to_string(s.speed()) +
                           " at or below v_min");
  if (dx == 0.0 && dy == 0.0)
    throw UndefinedBearing("bearing_phi: vehicle at the target center");
  return wrap_angle(std::atan2(s.ydot, s.xdot) - std::atan2(dy, dx));
}

/// kappa_ref = kappa0 (1 + gamma cos(phi)), before any feasibility clamp.
inline double kappa_reference(double phi, const CenterTarget& c) {
  return c.kappa0() * (1.0 + c.gamma * std::cos(phi));
}

struct OuterConfig {
  double v_min = 0.1;       // bearing validity threshold [m/s]
  double kappa_lo = 0.0;    // feasibility clamp (equilibrium-table range)
  double kappa_hi = std::numeric_limits<double>::infinity();
};

/// Outer-loop law with a one-value hold on undefined bearings.
class OuterLoop {
 public:
  OuterLoop(const OuterConfig& cfg, const CenterTarget& initial_target)
      : cfg_(cfg), last_(clamp(initial_target.kappa0(), cfg.kappa_lo, cfg.kappa_hi)) {}

  double tick(const VehicleState& estimate_mean, const CenterTarget& target_now) {
    held_ = false;
    try {
      const double phi = bearing_phi(estimate_mean, target_now, cfg_.v_min);
      phi_ = phi;
      d_ = std::hypot(estimate_mean.x - target_now.cx, estimate_mean.y - target_now.cy);
      last_ = clamp(kappa_reference(phi, target_now), cfg_.kappa_lo, cfg_.kappa_hi);
    } catch (const UndefinedBearing&) {
      held_ = true;  // keep the previous reference
    }
    return last_;
  }

  /// Adjust the feasibility clamp (e.g. to the equilibria achievable at the
  /// current speed) before the next tick.
  void set_clamp(double lo, double hi) {
    cfg_.kappa_lo = lo;
    cfg_.kappa_hi = hi;
  }

  bool held() const { return held_; }
  double last_phi() const { return phi_; }
  double last_d() const { return d_; }
  double last_kappa_ref() const { return last_; }

 private:
  OuterConfig cfg_;
  double last_;
  double phi_ = kPi / 2.0;
  double d_ = 0.0;
  bool held_ = false;
};

// ---------------------------------------------------------------------------
// Kinematic validation of the circumnavigation law (perfect inner loop).
// ---------------------------------------------------------------------------

struct KinematicSample {
  double t = 0.0;
  double d = 0.0;
  double phi = 0.0;  // unwrapped along the trajectory
  double V = 0.0;    // Lyapunov function value
};

struct KinematicTrace {
  std::vector<KinematicSample> samples;
  bool converged = false;
  double t_converged = -1.0;
  double max_lyapunov_violation = 0.0;  // max over steps of DeltaV - certificate integral
  double max_rate_mismatch = 0.0;       // max over steps of |DeltaV - certificate integral|
};

struct KinematicValidateConfig {
  double dt = 1e-3;            // recording step [s]
  double max_dphi = 0.005;     // substep cap on |dphi| [rad]
  double d_min = 1e-6;         // singularity guard [m]
  double conv_tol = 1e-3;      // convergence band on |phi - pi/2| and |d*kappa0 - 1|
  double step_tol = 1e-8;      // per-step Lyapunov decrease tolerance
  bool record = true;
  bool early_exit = true;      // stop once safely inside a quarter of the band
};

/// Lyapunov candidate from the stability proof.
inline double lyapunov_value(double d, double phi, double kappa0) {
  const double rinv = 1.0 / kappa0;
  return 0.5 * (d - rinv) * (d - rinv) + rinv * d * (1.0 - std::sin(phi));
}

/// Integrates d' = v cos(phi), phi' = v (kappa0 (1 + gamma cos phi) - sin(phi)/d)
/// and checks the Lyapunov certificate step by step. Along trajectories of
/// this system, dV/dt = -v gamma d cos^2(phi) exactly, which is nonpositive
/// and vanishes only where cos(phi) = 0.
inline KinematicTrace kinematic_validate(const CenterTarget& target, double v,
                                         const PolarState& initial, double horizon,
                                         const KinematicValidateConfig& cfg = {}) {
  if (!(v > 0.0)) throw Error("kinematic_validate: v must be positive");
  if (!(target.gamma > 0.0))
    throw Error("kinematic_validate: gamma must be positive (Theorem hypothesis)");
  if (!(initial.d > 0.0)) throw Error("kinematic_validate: initial d must be positive");

  const double k0 = target.kappa0();
  auto deriv = [&](const std::array<double, 2>& y) -> std::array<double, 2> {
    const double d = y[0], phi = y[1];
    return {v * std::cos(phi), v * (k0 * (1.0 + target.gamma * std::cos(phi)) -
                                    std::sin(phi) / d)};
  };

  KinematicTrace out;
  std::array<double, 2> y{initial.d, initial.phi};
  double t = 0.0;
  double V = lyapunov_value(y[0], y[1], k0);
  if (cfg.record) out.samples.push_back({t, y[0], y[1], V});

  const auto n_steps = static_cast<long>(std::llround(horizon / cfg.dt));
  auto vdot_certificate = [&](const std::array<double, 2>& s) {
    return -v * target.gamma * s[0] * std::cos(s[1]) * std::cos(s[1]);
  };
  for (long k = 0; k < n_steps; ++k) {
    // Substep adaptively so fast bearing sweeps near the center stay resolved.
    double remaining = cfg.dt;
    double drop = 0.0;  // trapezoid integral of the certificate rate
    while (remaining > 1e-15) {
      const double phidot = std::abs(deriv(y)[1]);
      const double h = std::min(remaining, cfg.max_dphi / std::max(phidot, 1e-9));
      const double g0 = vdot_certificate(y);
      y = rk4_step<2>(deriv, y, h);
      if (!(y[0] > cfg.d_min))
        throw SingularKinematics("kinematic_validate: d -> 0 at t=" + std::to_string(t));
      drop += 0.5 * h * (g0 + vdot_certificate(y));
      remaining -= h;
    }
    t += cfg.dt;
    const double V_next = lyapunov_value(y[0], y[1], k0);
    out.max_lyapunov_violation =
        std::max(out.max_lyapunov_violation, (V_next - V) - drop);
    out.max_rate_mismatch =
        std::max(out.max_rate_mismatch, std::abs(V_next - V - drop));
    V = V_next;
    if (cfg.record) out.samples.push_back({t, y[0], y[1], V});

    const double phi_err = std::abs(wrap_angle(y[1] - kPi / 2.0));
    const double d_err = std::abs(y[0] * k0 - 1.0);
    if (phi_err < cfg.conv_tol && d_err < cfg.conv_tol) {
      out.converged = true;
      if (out.t_converged < 0.0) out.t_converged = t;
    } else {
      out.converged = false;
      out.t_converged = -1.0;
    }
    if (cfg.early_exit && phi_err < 0.25 * cfg.conv_tol && d_err < 0.25 * cfg.conv_tol)
      break;
  }
  return out;
}

}  // namespace drift
