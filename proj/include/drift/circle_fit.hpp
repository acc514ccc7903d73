#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "drift/errors.hpp"
#include "drift/window.hpp"

namespace drift {

struct CircleFitConfig {
  double psidot_min = 0.05;  // below this the kinematic radius is dropped [rad/s]
  double r_max = 1e3;        // fits beyond this radius report zero curvature [m]
  int max_iters = 20;
  double step_tol = 1e-8;
};

struct CircleFitResult {
  double x0 = 0.0;
  double y0 = 0.0;
  double R = 0.0;
  double kappa = 0.0;     // 1/R, or 0 when degenerate / R > r_max
  double residual = 0.0;  // RMS of the combined geometric+kinematic residuals
  bool degenerate = false;
};

namespace detail {

/// Algebraic (Kasa) circle fit through the positions; empty when the normal
/// equations are rank-deficient (collinear points). The data is centered on
/// its centroid first so short arcs far from the origin stay well conditioned.
inline bool kasa_fit(const std::vector<WindowSample>& w, double& x0, double& y0, double& R) {
  double mx = 0.0, my = 0.0;
  for (const auto& s : w) {
    mx += s.state.x;
    my += s.state.y;
  }
  mx /= static_cast<double>(w.size());
  my /= static_cast<double>(w.size());

  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const auto& s : w) {
    const double x = s.state.x - mx, y = s.state.y - my;
    const Eigen::Vector3d row(x, y, 1.0);
    A += row * row.transpose();
    b += row * (x * x + y * y);
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
  lu.setThreshold(1e-7);
  if (lu.rank() < 3) return false;
  const Eigen::Vector3d c = lu.solve(b);
  const double cx = 0.5 * c(0), cy = 0.5 * c(1);
  const double r2 = c(2) + cx * cx + cy * cy;
  if (!(r2 > 0.0)) return false;
  x0 = cx + mx;
  y0 = cy + my;
  R = std::sqrt(r2);
  return true;
}

}  // namespace detail

/// Windowed circle fit fusing geometric radii with kinematic radii v/|psidot|.
/// Minimizes sum_i (R_geo_i - R)^2 + (R_kin_i - R)^2 over (x0, y0, R) by
/// Gauss-Newton from a Kasa initialization; at the optimum R is the mean of
/// all geometric and kinematic radii.
inline CircleFitResult fit_circle(const std::vector<WindowSample>& w,
                                  const CircleFitConfig& cfg = {}) {
  if (w.size() < 3) throw FitFailure("fit_circle: need at least 3 samples");
  const std::size_t n = w.size();

  std::vector<double> r_kin;
  r_kin.reserve(n);
  for (const auto& s : w)
    if (std::abs(s.state.psidot) >= cfg.psidot_min)
      r_kin.push_back(s.state.speed() / std::abs(s.state.psidot));

  CircleFitResult out;
  auto degenerate = [&]() {
    out.degenerate = true;
    out.R = cfg.r_max;
    out.kappa = 0.0;
    return out;
  };

  if (r_kin.empty()) return degenerate();

  double x0, y0, R;
  if (!detail::kasa_fit(w, x0, y0, R)) return degenerate();

  const std::size_t m = n + r_kin.size();
  Eigen::VectorXd r(m);
  Eigen::MatrixXd J(m, 3);
  auto eval = [&](double cx, double cy, double rad) {
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = w[i].state.x - cx, dy = w[i].state.y - cy;
      const double d = std::hypot(dx, dy);
      r(i) = d - rad;
      if (d > 1e-12) {
        J(i, 0) = -dx / d;
        J(i, 1) = -dy / d;
      } else {
        J(i, 0) = J(i, 1) = 0.0;
      }
      J(i, 2) = -1.0;
    }
    for (std::size_t k = 0; k < r_kin.size(); ++k) {
      r(n + k) = r_kin[k] - rad;
      J(n + k, 0) = J(n + k, 1) = 0.0;
      J(n + k, 2) = -1.0;
    }
  };

  bool converged = false;
  for (int it = 0; it < cfg.max_iters && !converged; ++it) {
    eval(x0, y0, R);
    const Eigen::Matrix3d JtJ = J.transpose() * J;
    const Eigen::Vector3d g = J.transpose() * r;
    const Eigen::Vector3d step = JtJ.ldlt().solve(-g);
    if (!step.allFinite())
      throw FitFailure("fit_circle: singular normal equations at x0=" +
                       std::to_string(x0) + " y0=" + std::to_string(y0));
    x0 += step(0);
    y0 += step(1);
    R += step(2);
    if (step.norm() < cfg.step_tol) converged = true;
  }
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(R))
    throw FitFailure("fit_circle: non-finite iterate");
  if (!converged)
    throw FitFailure("fit_circle: no convergence; last iterate x0=" + std::to_string(x0) +
                     " y0=" + std::to_string(y0) + " R=" + std::to_string(R));
  if (R <= 0.0 || R > cfg.r_max) return degenerate();

  out.x0 = x0;
  out.y0 = y0;
  out.R = R;
  out.kappa = 1.0 / R;
  eval(x0, y0, R);
  out.residual = std::sqrt(r.squaredNorm() / static_cast<double>(m));
  return out;
}

inline CircleFitResult fit_circle(const TrajectoryWindow& w, const CircleFitConfig& cfg = {}) {
  return fit_circle(w.snapshot(), cfg);
}

}  // namespace drift
