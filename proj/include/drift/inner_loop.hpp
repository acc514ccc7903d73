#pragma once

#include <cmath>
#include <string>

#include "drift/equilibrium.hpp"
#include "drift/errors.hpp"
#include "drift/l1_adaptive.hpp"
#include "drift/numeric.hpp"
#include "drift/pid.hpp"
#include "drift/types.hpp"

namespace drift {

/// Per-tick saturation/quality flags, also logged as the telemetry bitmask.
namespace sat_flag {
inline constexpr unsigned delta_limit = 1u << 0;
inline constexpr unsigned omega_limit = 1u << 1;
inline constexpr unsigned sigma_projected = 1u << 2;
inline constexpr unsigned ff_clamped = 1u << 3;
inline constexpr unsigned ff_infeasible = 1u << 4;
inline constexpr unsigned outer_hold = 1u << 5;
inline constexpr unsigned kappa_invalid = 1u << 6;
}  // namespace sat_flag

struct InnerConfig {
  PidConfig sideslip;
  PidConfig curvature;
  L1Config l1;
  double beta_ref = -kPi / 3.0;   // counter-clockwise drift posture
  double staleness = 0.1;         // estimate age bound [s]
  double beta_v_min = 0.3;        // below this speed the sideslip input is gated to 0
  double kappa_meas_max = 0.3;    // measured-curvature clamp [1/m]
  int turn_sign = +1;             // +1 ccw; -1 mirrors the loops for clockwise drift
  // Launch pacing: the sideslip target is scaled by (v / v_eq)^pow toward its
  // full value, v_eq being the table equilibrium speed for the current
  // (mu, kappa_ref). Matches the posture to the lateral-force budget so a
  // standing start spirals onto the circle instead of diving inside it.
  bool beta_ref_speed_schedule = true;
  double beta_schedule_pow = 2.0;
  double beta_schedule_vfrac = 0.85;  // full posture from this fraction of v_eq up
  double omega_schedule_floor = 0.35; // launch wheel-speed fraction at standstill
  // Overspeed guard: above this fraction of the table equilibrium speed the
  // wheel-speed feedforward is scaled down so the vehicle brakes back onto
  // the feasible drift manifold (post interaction-change recovery).
  double overspeed_frac = 1.05;
  double overspeed_pow = 2.0;
  double overspeed_scale_min = 0.75;  // never cut the feedforward deeper than this
  // Steering authority scales with the tire-ground friction, so the sideslip
  // error is normalized by the friction estimate to keep the loop gain
  // consistent across interaction changes. 0 disables.
  double mu_gain_ref = 0.13;
  // Slew limit on the curvature measurement consumed by the loop [1/m per s];
  // bridges transiently unreliable fits without command discontinuities.
  double kappa_slew = 0.03;
};

/// Estimator outputs consumed by one inner tick.
struct InnerEstimates {
  double beta = 0.0;       // [rad]
  double kappa = 0.0;      // unsigned [1/m]
  bool kappa_valid = true; // false while the circle fit is degenerate/unreliable
  double mu = 0.1;
  double v = 0.0;          // [m/s]
  double timestamp = 0.0;  // [s]
};

/// Sideslip PID -> steering, curvature PID -> wheel speed, feedforward from
/// the equilibrium table, L1 reshaping of the curvature reference.
class InnerLoop {
 public:
  InnerLoop(const InnerConfig& cfg, const VehicleParams& params)
      : cfg_(cfg), params_(params), sideslip_(cfg.sideslip), curvature_(cfg.curvature),
        l1_(cfg.l1) {}

  /// delta = clamp(delta_ff + PID(beta_ref - beta)).
  double sideslip_loop(double beta, double beta_ref, double delta_ff) {
    return sideslip_loop_scaled(beta, beta_ref, delta_ff, 1.0);
  }

  double sideslip_loop_scaled(double beta, double beta_ref, double delta_ff,
                              double gain_scale) {
    const double fb = sideslip_.update(gain_scale * (beta_ref - beta));
    const double unsat = delta_ff + fb;
    const double delta = clamp(unsat, -params_.delta_max, params_.delta_max);
    if (delta != unsat || sideslip_.saturated()) flags_ |= sat_flag::delta_limit;
    return delta;
  }

  /// omega = clamp(omega_ff + PID(kappa_ac - kappa)), non-negative.
  double curvature_loop(double kappa, double kappa_ac, double omega_ff) {
    const double fb = curvature_.update(kappa_ac - kappa);
    const double unsat = omega_ff + fb;
    const double omega = clamp(unsat, 0.0, params_.omega_max);
    if (omega != unsat || curvature_.saturated()) flags_ |= sat_flag::omega_limit;
    return omega;
  }

  /// One step of the L1 block; returns the reshaped reference kappa_ac.
  double l1_update(double kappa_meas, double kappa_ref, double dt) {
    const double kappa_ac = l1_.update(kappa_meas, kappa_ref, dt);
    if (l1_.projection_active()) flags_ |= sat_flag::sigma_projected;
    return kappa_ac;
  }

  /// Full tick: feedforward lookup, L1 reshaping, both PID loops.
  ControlInput tick(const InnerEstimates& est, double kappa_ref,
                    const EquilibriumTable& table, double now) {
    if (now - est.timestamp > cfg_.staleness)
      throw StaleEstimate("inner tick at t=" + std::to_string(now) +
                          " with estimate from t=" + std::to_string(est.timestamp));
    flags_ = 0;

    const FeedforwardResult ff = lookup_feedforward(table, est.mu, kappa_ref);
    if (ff.clamped) flags_ |= sat_flag::ff_clamped;
    if (ff.infeasible_fallback) flags_ |= sat_flag::ff_infeasible;

    double beta_ref = cfg_.beta_ref;
    double omega_ff = ff.omega_ff;
    if (cfg_.beta_ref_speed_schedule) {
      const double v_full = cfg_.beta_schedule_vfrac * std::max(ff.v, 0.5);
      const double ratio = clamp(est.v / v_full, 0.0, 1.0);
      // Latching ramp: the posture only deepens during the launch; once at
      // speed the target is the constant drift reference for good.
      schedule_latch_ = std::max(schedule_latch_, std::pow(ratio, cfg_.beta_schedule_pow));
      beta_ref *= schedule_latch_;
      // Wheel speed scales with the same ramp so rear saturation stays
      // roughly constant through the spin-up instead of overshooting the
      // equilibrium speed.
      omega_latch_ = std::max(omega_latch_, clamp(ratio, cfg_.omega_schedule_floor, 1.0));
      omega_ff *= omega_latch_;
    }
    if (cfg_.overspeed_pow > 0.0) {
      const double over = est.v / (cfg_.overspeed_frac * std::max(ff.v, 0.5));
      if (over > 1.0)
        omega_ff *= std::max(1.0 / std::pow(over, cfg_.overspeed_pow),
                             cfg_.overspeed_scale_min);
    }

    // Clockwise runs mirror the lateral channel: measured beta and the
    // steering command change sign, the curvature channel is unsigned.
    const double mirror = cfg_.turn_sign >= 0 ? 1.0 : -1.0;
    const double beta_meas = est.v < cfg_.beta_v_min ? 0.0 : mirror * est.beta;
    double gain_scale = 1.0;
    if (cfg_.mu_gain_ref > 0.0)
      gain_scale = clamp(cfg_.mu_gain_ref / clamp(est.mu, 0.04, 0.3), 0.8, 1.4);
    const double delta_m = sideslip_loop_scaled(beta_meas, beta_ref, ff.delta_ff, gain_scale);

    double omega;
    if (est.kappa_valid) {
      double kappa_meas = clamp(est.kappa, 0.0, cfg_.kappa_meas_max);
      if (kappa_primed_ && cfg_.kappa_slew > 0.0) {
        const double dk = cfg_.kappa_slew * cfg_.curvature.period;
        kappa_meas = clamp(kappa_meas, kappa_used_ - dk, kappa_used_ + dk);
      }
      kappa_used_ = kappa_meas;
      kappa_primed_ = true;
      kappa_ac_ = l1_update(kappa_meas, kappa_ref, cfg_.curvature.period);
      omega = curvature_loop(kappa_meas, kappa_ac_, omega_ff);
    } else {
      // No usable curvature measurement: hold pure feedforward on the wheel
      // speed and keep the reference filter warm without adapting.
      kappa_ac_ = l1_.feedthrough(kappa_ref, cfg_.curvature.period);
      omega = clamp(omega_ff, 0.0, params_.omega_max);
      flags_ |= sat_flag::kappa_invalid;
    }
    return {mirror * delta_m, omega};
  }

  unsigned flags() const { return flags_; }
  double kappa_ac() const { return kappa_ac_; }
  const L1Adaptive& l1() const { return l1_; }
  Pid& sideslip_pid() { return sideslip_; }
  Pid& curvature_pid() { return curvature_; }
  const InnerConfig& config() const { return cfg_; }

  void reset() {
    sideslip_.reset();
    curvature_.reset();
    l1_.reset();
    flags_ = 0;
    kappa_ac_ = 0.0;
    schedule_latch_ = 0.0;
    omega_latch_ = 0.0;
    kappa_used_ = 0.0;
    kappa_primed_ = false;
  }

 private:
  InnerConfig cfg_;
  VehicleParams params_;
  Pid sideslip_;
  Pid curvature_;
  L1Adaptive l1_;
  unsigned flags_ = 0;
  double kappa_ac_ = 0.0;
  double schedule_latch_ = 0.0;
  double omega_latch_ = 0.0;
  double kappa_used_ = 0.0;
  bool kappa_primed_ = false;
};

}  // namespace drift
