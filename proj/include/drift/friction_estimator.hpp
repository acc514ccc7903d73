#pragma once

#include <cmath>
#include <vector>

#include "drift/dynamics.hpp"
#include "drift/errors.hpp"
#include "drift/numeric.hpp"
#include "drift/window.hpp"

namespace drift {

struct FrictionEstimatorConfig {
  double mu_lo = 0.02;      // search bounds cover ice to dry asphalt
  double mu_hi = 1.5;
  double tol = 1e-4;        // golden-section interval tolerance
  double rest_speed = 0.05;     // excitation guards [m/s], [rad/s]
  double rest_omega = 1.0;
  double flat_rel = 1e-9;   // relative loss spread below which mu is unidentifiable
  // Prediction stride in window samples. Longer prediction intervals keep the
  // true state change well above the estimate noise, which otherwise biases
  // the fitted friction upward.
  int stride = 10;
};

struct FrictionEstimate {
  double mu = 0.0;
  double loss = 0.0;  // one-step l2 prediction loss at the returned mu
};

namespace detail {

/// Propagate one window sample forward by its pair interval under the
/// constant-mu surrogate dynamics, sub-stepping to honor the integrator's dt
/// bound.
inline VehicleState surrogate_predict(const WindowSample& from, double dt_total, double mu,
                                      const VehicleParams& p) {
  const FrictionModel fm = FrictionModel::constant(mu);
  VehicleState s = from.state;
  double remaining = dt_total;
  while (remaining > 1e-12) {
    const double dt = std::min(remaining, 0.01);
    s = step(s, from.input, dt, p, fm, fm);
    remaining -= dt;
  }
  return s;
}

inline double pair_loss(const VehicleState& pred, const VehicleState& truth) {
  const auto a = pred.to_array(), b = truth.to_array();
  double acc = 0.0;
  for (int i = 0; i < 6; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

}  // namespace detail

/// Prediction loss of the constant-mu surrogate over the window: each sample
/// is propagated `stride` samples forward through the recorded input history
/// and compared against the recorded state. Longer horizons keep the true
/// state change above the estimate noise without violating the input record.
inline double friction_loss(const std::vector<WindowSample>& w, const VehicleParams& p,
                            double mu, int stride = 1) {
  const std::size_t k = static_cast<std::size_t>(std::max(stride, 1));
  const FrictionModel fm = FrictionModel::constant(mu);
  double acc = 0.0;
  for (std::size_t i = 0; i + k < w.size(); i += k) {
    VehicleState s = w[i].state;
    for (std::size_t j = i; j < i + k; ++j) {
      double remaining = w[j + 1].t - w[j].t;
      while (remaining > 1e-12) {
        const double dt = std::min(remaining, 0.01);
        s = step(s, w[j].input, dt, p, fm, fm);
        remaining -= dt;
      }
    }
    acc += detail::pair_loss(s, w[i + k].state);
  }
  return acc;
}

/// Bounded 1-D search for the friction coefficient that best explains the
/// window under the surrogate dynamics. Throws UnidentifiableFriction when
/// the window carries no excitation (vehicle at rest, wheels stopped) or the
/// loss landscape is flat.
inline FrictionEstimate estimate_friction(const std::vector<WindowSample>& w,
                                          const VehicleParams& p,
                                          const FrictionEstimatorConfig& cfg = {}) {
  if (w.size() < 2) throw Error("estimate_friction: need at least 2 samples");

  bool excited = false;
  for (const auto& s : w) {
    if (s.state.speed() > cfg.rest_speed || std::abs(s.state.psidot) > cfg.rest_speed ||
        s.input.omega > cfg.rest_omega) {
      excited = true;
      break;
    }
  }
  if (!excited)
    throw UnidentifiableFriction("estimate_friction: window has no excitation");

  const double mid = 0.5 * (cfg.mu_lo + cfg.mu_hi);
  const double l_lo = friction_loss(w, p, cfg.mu_lo, cfg.stride);
  const double l_mid = friction_loss(w, p, mid, cfg.stride);
  const double l_hi = friction_loss(w, p, cfg.mu_hi, cfg.stride);
  const double top = std::max({l_lo, l_mid, l_hi});
  const double spread = top - std::min({l_lo, l_mid, l_hi});
  if (!(spread > cfg.flat_rel * std::max(top, 1e-300)))
    throw UnidentifiableFriction("estimate_friction: flat loss landscape");

  const ScalarMin best = golden_section(
      [&](double mu) { return friction_loss(w, p, mu, cfg.stride); }, cfg.mu_lo, cfg.mu_hi,
      cfg.tol);
  return {best.x, best.fx};
}

inline FrictionEstimate estimate_friction(const TrajectoryWindow& w, const VehicleParams& p,
                                          const FrictionEstimatorConfig& cfg = {}) {
  return estimate_friction(w.snapshot(), p, cfg);
}

}  // namespace drift
