#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "drift/circle_fit.hpp"
#include "drift/dynamics.hpp"
#include "drift/equilibrium.hpp"
#include "drift/errors.hpp"
#include "drift/friction_estimator.hpp"
#include "drift/inner_loop.hpp"
#include "drift/kalman.hpp"
#include "drift/outer_loop.hpp"
#include "drift/sensors.hpp"
#include "drift/window.hpp"

namespace drift {

enum class TaskKind { fixed_circle, moving_center, varying_interaction, kinematic_validate };

struct TireSwitch {
  double t = 0.0;
  TireParams front{};
  TireParams rear{};
};

/// Everything a closed-loop run depends on. Loaded from the scenario config
/// file; every field is recorded in the run manifest.
struct RunConfig {
  TaskKind task = TaskKind::fixed_circle;
  double duration = 100.0;        // [s]
  double physics_dt = 1e-3;       // [s]
  double control_period = 0.01;   // [s], 100 Hz
  std::uint64_t seed = 1;

  VehicleParams vehicle;
  TireParams tire_front{5.0, 2.0, 0.3};
  TireParams tire_rear{5.0, 2.0, 0.3};
  std::vector<TireSwitch> tire_schedule;  // sorted by time; applied at exact steps

  // Target geometry.
  double center_x = 0.0;
  double center_y = 0.0;
  double R_exp = 10.0;
  double outer_gamma = 0.5;
  double orbit_radius = 15.0;   // moving-center task
  double orbit_speed = 0.131;   // [m/s], counter-clockwise
  double orbit_phase = 0.0;     // [rad]

  VehicleState initial;  // launch pose; zero velocity by default

  // Estimation stack.
  bool oracle_estimator = false;  // debug mode: controllers read the true state
  SensorSuiteConfig sensors;
  KalmanConfig kf;
  std::array<double, 6> kf_init_var{1e-6, 1e-6, 1e-6, 1e-4, 1e-4, 1e-4};
  int window_length = 50;
  CircleFitConfig circle_fit;
  double kappa_resid_max = 0.3;  // fit RMS above this marks the estimate invalid [m]
  double kappa_v_min = 1.0;      // curvature feedback needs this much speed [m/s]
  FrictionEstimatorConfig friction;
  double friction_period = 0.1;  // re-estimation interval [s]
  double mu_prior = 0.115;       // held until the estimator produces a value
  double mu_filter_tau = 0.5;    // first-order smoothing of the mu estimate [s]; 0 = raw

  InnerConfig inner;
  OuterConfig outer;
  // Tighten the curvature-reference clamp to equilibria achievable at the
  // current speed; keeps the outer law from demanding curvature the tires
  // cannot produce right after an interaction change.
  bool feasible_kappa_clamp = true;
  double feasible_speed_margin = 0.88;  // clamp engages beyond this overspeed fraction

  double position_limit = 1e4;  // divergence guard [m]

  /// Expected center at time t (fixed except for the moving-center task).
  void center_at(double t, double& cx, double& cy) const {
    if (task == TaskKind::moving_center) {
      const double omega = orbit_speed / orbit_radius;
      cx = center_x + orbit_radius * std::cos(orbit_phase + omega * t);
      cy = center_y + orbit_radius * std::sin(orbit_phase + omega * t);
    } else {
      cx = center_x;
      cy = center_y;
    }
  }

  void validate() const {
    if (!(duration >= 0.0)) throw ConfigError("scenario.duration must be >= 0");
    if (!(R_exp > 0.0)) throw ConfigError("target.R_exp must be positive");
    if (!(physics_dt > 0.0 && physics_dt <= 0.01))
      throw ConfigError("scenario.physics_dt must be in (0, 0.01]");
    if (!(control_period >= physics_dt))
      throw ConfigError("scenario.control_period must be >= physics_dt");
    if (!(outer_gamma > 0.0)) throw ConfigError("outer.gamma must be positive");
    if (window_length < 3) throw ConfigError("estimation.window_length must be >= 3");
    if (!(friction_period > 0.0)) throw ConfigError("estimation.friction_period must be positive");
    for (std::size_t i = 1; i < tire_schedule.size(); ++i)
      if (tire_schedule[i].t <= tire_schedule[i - 1].t)
        throw ConfigError("tires.schedule switch times must be strictly increasing");
    if (task == TaskKind::moving_center && !(orbit_radius > 0.0 && orbit_speed >= 0.0))
      throw ConfigError("target.orbit must have positive radius and non-negative speed");
  }
};

/// One 100 Hz telemetry row. Column order matches the CSV contract.
struct TickRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, psi = 0.0, xdot = 0.0, ydot = 0.0, psidot = 0.0;
  double delta = 0.0, omega = 0.0;
  double beta = 0.0;        // true sideslip
  double kappa = 0.0;       // estimated curvature fed back
  double kappa_ref = 0.0;
  double kappa_ac = 0.0;
  double est_x = 0.0, est_y = 0.0, est_psi = 0.0;
  double mu_est = 0.0;
  double d = 0.0;    // estimate-based distance to the expected center
  double phi = 0.0;  // estimate-based bearing offset
  unsigned sat_flags = 0;
};

struct RunRecord {
  std::vector<TickRow> rows;
  double control_period = 0.01;
  bool failed = false;
  double fail_time = 0.0;
  std::string fail_reason;
};

/// Two-rate closed-loop execution: physics at physics_dt, estimators and both
/// control loops on the control tick. Estimators consume only the sensor
/// stream unless oracle_estimator is set.
inline RunRecord run_scenario(const RunConfig& cfg, const EquilibriumTable& table) {
  cfg.validate();
  RunRecord rec;
  rec.control_period = cfg.control_period;

  VehicleState truth = cfg.initial;
  TireParams tire_f = cfg.tire_front, tire_r = cfg.tire_rear;
  std::size_t next_switch = 0;

  SensorSimulator sensors(cfg.sensors, cfg.seed);
  StateEstimate init;
  init.mean = cfg.initial;
  init.timestamp = 0.0;
  init.cov = Cov6::Zero();
  for (int i = 0; i < 6; ++i) init.cov(i, i) = cfg.kf_init_var[i];
  AsyncKalmanFilter filter(init, cfg.kf);
  std::deque<Delivery> pending;

  TrajectoryWindow window(cfg.window_length);
  InnerLoop inner(cfg.inner, cfg.vehicle);
  CenterTarget target{cfg.center_x, cfg.center_y, cfg.R_exp, cfg.outer_gamma};
  OuterLoop outer(cfg.outer, target);

  double kappa_est = 0.0;
  double mu_est = cfg.mu_prior;
  double next_friction_t = 0.0;
  ControlInput u{0.0, 0.0};

  const long steps = std::llround(cfg.duration / cfg.physics_dt);
  const long per_tick = std::llround(cfg.control_period / cfg.physics_dt);
  const long switch_step_base =
      cfg.tire_schedule.empty() ? -1
                                : std::llround(cfg.tire_schedule[0].t / cfg.physics_dt);
  (void)switch_step_base;

  for (long i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * cfg.physics_dt;

    // Tire switches snap to the physics grid and apply before the step.
    while (next_switch < cfg.tire_schedule.size() &&
           i == std::llround(cfg.tire_schedule[next_switch].t / cfg.physics_dt)) {
      tire_f = cfg.tire_schedule[next_switch].front;
      tire_r = cfg.tire_schedule[next_switch].rear;
      ++next_switch;
    }

    // Sensor sampling, then deliveries due by now.
    for (auto& d : sensors.sample(truth, t, cfg.physics_dt)) {
      auto pos = std::upper_bound(
          pending.begin(), pending.end(), d,
          [](const Delivery& a, const Delivery& b) { return a.deliver_at < b.deliver_at; });
      pending.insert(pos, d);
    }
    while (!pending.empty() && pending.front().deliver_at <= t + 0.5 * cfg.physics_dt) {
      filter.deliver(pending.front().m);
      pending.pop_front();
    }

    if (i % per_tick == 0) {
      StateEstimate est;
      if (cfg.oracle_estimator) {
        est.mean = truth;
        est.timestamp = t;
        est.cov = Cov6::Zero();
      } else {
        est = filter.predict_to(t);
      }

      // Curvature from the trailing window (states recorded at earlier ticks).
      bool kappa_valid = false;
      if (window.size() >= 3) {
        try {
          const CircleFitResult fit = fit_circle(window, cfg.circle_fit);
          kappa_est = fit.kappa;
          kappa_valid = !fit.degenerate && fit.residual <= cfg.kappa_resid_max;
        } catch (const FitFailure&) {
          // transient geometry; hold the previous estimate, marked invalid
        }
      }
      if (t >= next_friction_t && window.size() >= 2) {
        try {
          const double mu_raw = estimate_friction(window.snapshot(), cfg.vehicle, cfg.friction).mu;
          if (cfg.mu_filter_tau > 0.0) {
            const double a = cfg.friction_period / (cfg.mu_filter_tau + cfg.friction_period);
            mu_est += a * (mu_raw - mu_est);
          } else {
            mu_est = mu_raw;
          }
        } catch (const UnidentifiableFriction&) {
          // no excitation yet; hold
        }
        next_friction_t = t + cfg.friction_period;
      }

      cfg.center_at(t, target.cx, target.cy);
      OuterConfig outer_cfg_now = cfg.outer;
      if (cfg.feasible_kappa_clamp) {
        const double hi = feasible_kappa_for_speed(table, mu_est,
                                                   cfg.feasible_speed_margin * est.mean.speed());
        outer_cfg_now.kappa_hi = std::max(std::min(cfg.outer.kappa_hi, hi), cfg.outer.kappa_lo);
      }
      outer.set_clamp(outer_cfg_now.kappa_lo, outer_cfg_now.kappa_hi);
      const double kappa_ref = outer.tick(est.mean, target);

      const double v_est = est.mean.speed();
      const double beta_est =
          v_est < 1e-6 ? 0.0 : wrap_angle(std::atan2(est.mean.ydot, est.mean.xdot) -
                                          est.mean.psi);
      kappa_valid = kappa_valid && v_est >= cfg.kappa_v_min;
      InnerEstimates in{beta_est, kappa_est, kappa_valid, mu_est, v_est, t};
      u = cfg.vehicle.clamp(inner.tick(in, kappa_ref, table, t));

      TickRow row;
      row.t = t;
      row.x = truth.x;
      row.y = truth.y;
      row.psi = truth.psi;
      row.xdot = truth.xdot;
      row.ydot = truth.ydot;
      row.psidot = truth.psidot;
      row.delta = u.delta;
      row.omega = u.omega;
      const double v_true = truth.speed();
      row.beta = v_true < 1e-6
                     ? 0.0
                     : wrap_angle(std::atan2(truth.ydot, truth.xdot) - truth.psi);
      row.kappa = kappa_est;
      row.kappa_ref = kappa_ref;
      row.kappa_ac = inner.kappa_ac();
      row.est_x = est.mean.x;
      row.est_y = est.mean.y;
      row.est_psi = est.mean.psi;
      row.mu_est = mu_est;
      row.d = outer.last_d();
      row.phi = outer.last_phi();
      row.sat_flags = inner.flags() | (outer.held() ? sat_flag::outer_hold : 0u);
      rec.rows.push_back(row);

      window.push(est.mean, u, t);
    }

    try {
      truth = step(truth, u, cfg.physics_dt, cfg.vehicle, FrictionModel::magic(tire_f),
                   FrictionModel::magic(tire_r));
    } catch (const Error& e) {
      rec.failed = true;
      rec.fail_time = t;
      rec.fail_reason = e.what();
      return rec;
    }
    if (std::abs(truth.x) > cfg.position_limit || std::abs(truth.y) > cfg.position_limit) {
      rec.failed = true;
      rec.fail_time = t;
      rec.fail_reason = "position diverged beyond limit";
      return rec;
    }
  }
  return rec;
}

}  // namespace drift
