#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "drift/numeric.hpp"
#include "drift/scenario.hpp"

namespace drift {

/// Summary quantities of one run, computed from the telemetry record and the
/// scenario parameters only.
struct Metrics {
  double max_relative_error = 0.0;   // max |dist(t) - R_exp| / R_exp, whole run
  double settle_time = -1.0;         // first t after which |beta - beta_ref| < 0.1 rad
  double settle_time_strict = -1.0;  // same with a 0.05 rad band
  bool unsettled = false;
  double kappa_rms_post_settle = 0.0;   // RMS of (kappa - kappa_ref)/kappa_ref
  double drift_fraction_post_settle = 0.0;  // fraction of post-settle ticks |beta| > pi/6
  double mean_speed_post_settle = 0.0;
};

namespace detail {

/// First time after which the band condition holds for the rest of the run.
inline double settle_time_for_band(const RunRecord& rec, double beta_ref, double band) {
  const auto& rows = rec.rows;
  long good_from = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::abs(wrap_angle(rows[i].beta - beta_ref)) < band) {
      if (good_from < 0) good_from = static_cast<long>(i);
    } else {
      good_from = -1;
    }
  }
  return good_from < 0 ? -1.0 : rows[static_cast<std::size_t>(good_from)].t;
}

}  // namespace detail

inline Metrics compute_metrics(const RunRecord& rec, const RunConfig& cfg) {
  Metrics m;
  if (rec.rows.empty()) {
    m.unsettled = true;
    return m;
  }
  const double beta_ref =
      cfg.inner.turn_sign >= 0 ? cfg.inner.beta_ref : -cfg.inner.beta_ref;

  for (const auto& r : rec.rows) {
    double cx, cy;
    cfg.center_at(r.t, cx, cy);
    const double dist = std::hypot(r.x - cx, r.y - cy);
    m.max_relative_error =
        std::max(m.max_relative_error, std::abs(dist - cfg.R_exp) / cfg.R_exp);
  }

  m.settle_time = detail::settle_time_for_band(rec, beta_ref, 0.1);
  m.settle_time_strict = detail::settle_time_for_band(rec, beta_ref, 0.05);
  m.unsettled = m.settle_time < 0.0;

  if (!m.unsettled) {
    double sq = 0.0, speed = 0.0;
    std::size_t n = 0, drifting = 0;
    for (const auto& r : rec.rows) {
      if (r.t < m.settle_time) continue;
      const double rel = (r.kappa - r.kappa_ref) / r.kappa_ref;
      sq += rel * rel;
      speed += std::hypot(r.xdot, r.ydot);
      drifting += std::abs(r.beta) > kPi / 6.0 ? 1 : 0;
      ++n;
    }
    if (n > 0) {
      m.kappa_rms_post_settle = std::sqrt(sq / static_cast<double>(n));
      m.drift_fraction_post_settle = static_cast<double>(drifting) / static_cast<double>(n);
      m.mean_speed_post_settle = speed / static_cast<double>(n);
    }
  }
  return m;
}

/// RMS mismatch of the kappa_ref series under a time shift of one period,
/// normalized by the expected curvature: measures whether the reference
/// repeats orbit over orbit in the moving-center task.
inline double kappa_ref_period_mismatch(const RunRecord& rec, double period,
                                        double t_start, double kappa0) {
  const double dt = rec.control_period;
  const auto& rows = rec.rows;
  const long shift = std::lround(period / dt);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].t < t_start) continue;
    const std::size_t j = i + static_cast<std::size_t>(shift);
    if (j >= rows.size()) break;
    const double diff = rows[j].kappa_ref - rows[i].kappa_ref;
    sq += diff * diff;
    ++n;
  }
  if (n == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(sq / static_cast<double>(n)) / kappa0;
}

/// Mean signed curvature tracking error over [t0, t1]; the post-switch bias
/// measure for the adaptation A/B comparison.
inline double kappa_bias(const RunRecord& rec, double t0, double t1) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : rec.rows) {
    if (r.t < t0 || r.t > t1) continue;
    acc += r.kappa - r.kappa_ref;
    ++n;
  }
  return n == 0 ? 0.0 : std::abs(acc / static_cast<double>(n));
}

/// Mean of the friction-estimate column over [t0, t1].
inline double mu_estimate_mean(const RunRecord& rec, double t0, double t1) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& r : rec.rows) {
    if (r.t < t0 || r.t > t1) continue;
    acc += r.mu_est;
    ++n;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace drift
