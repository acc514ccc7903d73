#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "drift/errors.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift {

enum class MeasurementKind : int { pose = 0, yaw_rate = 1, acceleration = 2 };

/// One sensor observation. `value`/`variance` use the first `dim` entries:
/// pose = (x, y, psi_wrapped), yaw_rate = (psidot), acceleration = (ax, ay).
struct Measurement {
  double timestamp = 0.0;
  MeasurementKind kind = MeasurementKind::pose;
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  Eigen::Vector3d variance = Eigen::Vector3d::Ones();
  int dim = 3;
  std::uint64_t seq = 0;  // producer sequence; breaks timestamp ties canonically
};

using Cov6 = Eigen::Matrix<double, 6, 6>;

struct StateEstimate {
  VehicleState mean;
  Cov6 cov = Cov6::Identity();
  double timestamp = 0.0;
};

struct KalmanConfig {
  // White-acceleration process noise, resolved in the velocity frame: the
  // turn-rate model already slaves the velocity direction to the gyro, so the
  // lateral channel can be much quieter than the tangential one.
  double sigma_accel = 2.0;          // tangential [m/s^2/sqrt(Hz)]
  double sigma_accel_lateral = 0.3;  // normal to the velocity [m/s^2/sqrt(Hz)]
  double sigma_yaw_acc = 4.0;        // white yaw acceleration [rad/s^2/sqrt(Hz)]
  double yaw_rate_bias = 0.0;        // known gyro bias, subtracted before the update
  double replay_window = 0.2;        // late measurements older than this are rejected [s]
};

namespace detail {

/// Integral of the rotation matrix over one step and its derivative w.r.t.
/// the turn rate; series form below the small-angle threshold.
inline void ctr_blocks(double r, double dt, Eigen::Matrix2d& A, Eigen::Matrix2d& dA,
                       Eigen::Matrix2d& Rot, Eigen::Matrix2d& dRot) {
  const double th = r * dt;
  const double c = std::cos(th), s = std::sin(th);
  Rot << c, -s, s, c;
  dRot << -s, -c, c, -s;
  dRot *= dt;
  if (std::abs(th) < 1e-6) {
    A << dt, -0.5 * r * dt * dt, 0.5 * r * dt * dt, dt;
    dA << 0.0, -0.5 * dt * dt, 0.5 * dt * dt, 0.0;
  } else {
    A << s / r, -(1.0 - c) / r, (1.0 - c) / r, s / r;
    Eigen::Matrix2d M;
    M << s, -(1.0 - c), 1.0 - c, s;
    Eigen::Matrix2d Mp;
    Mp << c, -s, s, c;
    dA = -M / (r * r) + Mp * dt / r;
  }
}

}  // namespace detail

/// Constant-turn-rate / constant-speed prediction. The input is accepted for
/// interface symmetry; the kinematic process model does not use it.
inline StateEstimate kf_predict(const StateEstimate& est, const ControlInput& /*input*/,
                                double to_time, const KalmanConfig& cfg) {
  if (to_time < est.timestamp)
    throw OutOfOrderMeasurement("kf_predict: target time " + std::to_string(to_time) +
                                " before estimate time " + std::to_string(est.timestamp));
  const double dt = to_time - est.timestamp;
  if (dt == 0.0) return est;

  const VehicleState& m = est.mean;
  Eigen::Matrix2d A, dA, Rot, dRot;
  detail::ctr_blocks(m.psidot, dt, A, dA, Rot, dRot);
  const Eigen::Vector2d vel(m.xdot, m.ydot);
  const Eigen::Vector2d dpos = A * vel;
  const Eigen::Vector2d nvel = Rot * vel;

  StateEstimate out;
  out.timestamp = to_time;
  out.mean.x = m.x + dpos(0);
  out.mean.y = m.y + dpos(1);
  out.mean.psi = m.psi + m.psidot * dt;
  out.mean.xdot = nvel(0);
  out.mean.ydot = nvel(1);
  out.mean.psidot = m.psidot;

  Cov6 F = Cov6::Identity();
  F.block<2, 2>(0, 3) = A;
  F.block<2, 1>(0, 5) = dA * vel;
  F.block<2, 2>(3, 3) = Rot;
  F.block<2, 1>(3, 5) = dRot * vel;
  F(2, 5) = dt;

  Cov6 Q = Cov6::Zero();
  const double dir = m.speed() > 0.3 ? std::atan2(m.ydot, m.xdot) : m.psi;
  Eigen::Matrix2d Rd;
  Rd << std::cos(dir), -std::sin(dir), std::sin(dir), std::cos(dir);
  Eigen::Matrix2d Qa = Rd *
                       Eigen::Vector2d(cfg.sigma_accel * cfg.sigma_accel,
                                       cfg.sigma_accel_lateral * cfg.sigma_accel_lateral)
                           .asDiagonal() *
                       Rd.transpose();
  const double qy = cfg.sigma_yaw_acc * cfg.sigma_yaw_acc;
  const double d3 = dt * dt * dt / 3.0, d2 = dt * dt / 2.0;
  Q.block<2, 2>(0, 0) = Qa * d3;
  Q.block<2, 2>(0, 3) = Qa * d2;
  Q.block<2, 2>(3, 0) = Qa * d2;
  Q.block<2, 2>(3, 3) = Qa * dt;
  Q(2, 2) = qy * d3;
  Q(2, 5) = Q(5, 2) = qy * d2;
  Q(5, 5) = qy * dt;

  out.cov = F * est.cov * F.transpose() + Q;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

/// Measurement update in Joseph form. Heading innovations are wrapped so the
/// unwrapped state heading tracks the wrapped sensor output.
inline StateEstimate kf_update(const StateEstimate& est, const Measurement& meas,
                               const KalmanConfig& cfg) {
  const VehicleState& m = est.mean;
  int dim = 0;
  Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();

  switch (meas.kind) {
    case MeasurementKind::pose:
      dim = 3;
      H(0, 0) = 1.0;
      H(1, 1) = 1.0;
      H(2, 2) = 1.0;
      nu(0) = meas.value(0) - m.x;
      nu(1) = meas.value(1) - m.y;
      nu(2) = wrap_angle(meas.value(2) - m.psi);
      break;
    case MeasurementKind::yaw_rate:
      dim = 1;
      H(0, 5) = 1.0;
      nu(0) = (meas.value(0) - cfg.yaw_rate_bias) - m.psidot;
      break;
    case MeasurementKind::acceleration:
      // Under the CTR model the inertial acceleration is psidot * J * v.
      dim = 2;
      H(0, 4) = -m.psidot;
      H(0, 5) = -m.ydot;
      H(1, 3) = m.psidot;
      H(1, 5) = m.xdot;
      nu(0) = meas.value(0) - (-m.ydot * m.psidot);
      nu(1) = meas.value(1) - (m.xdot * m.psidot);
      break;
  }

  const auto Hd = H.topRows(dim);
  const Eigen::MatrixXd R = meas.variance.head(dim).asDiagonal();
  const Eigen::MatrixXd S = Hd * est.cov * Hd.transpose() + R;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalConditioning("kf_update: innovation covariance not positive definite");
  const Eigen::MatrixXd K = llt.solve(Hd * est.cov).transpose();

  StateEstimate out = est;
  const Eigen::Matrix<double, 6, 1> dx = K * nu.head(dim);
  out.mean.x += dx(0);
  out.mean.y += dx(1);
  out.mean.psi += dx(2);
  out.mean.xdot += dx(3);
  out.mean.ydot += dx(4);
  out.mean.psidot += dx(5);
  const Cov6 IKH = Cov6::Identity() - K * Hd;
  out.cov = IKH * est.cov * IKH.transpose() + K * R * K.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

/// Asynchronous multi-rate filter. Measurements may arrive late and out of
/// order inside the replay window: each arrival is inserted into a
/// canonically ordered buffer (timestamp, kind, sequence) and the filter is
/// replayed from the last checkpoint before it, so the final estimate depends
/// only on the measurement set, not on the arrival order.
class AsyncKalmanFilter {
 public:
  AsyncKalmanFilter(const StateEstimate& init, const KalmanConfig& cfg)
      : cfg_(cfg), base_(init) {}

  void deliver(const Measurement& m) {
    if (m.timestamp < base_.timestamp)
      throw OutOfOrderMeasurement("deliver: measurement at t=" + std::to_string(m.timestamp) +
                                  " older than replay horizon " +
                                  std::to_string(base_.timestamp));
    Entry e{m, {}};
    auto pos = std::upper_bound(buf_.begin(), buf_.end(), e, entry_less);
    const std::size_t idx = static_cast<std::size_t>(pos - buf_.begin());
    buf_.insert(pos, e);
    StateEstimate run = idx == 0 ? base_ : buf_[idx - 1].post;
    for (std::size_t k = idx; k < buf_.size(); ++k) {
      run = kf_predict(run, {}, buf_[k].m.timestamp, cfg_);
      run = kf_update(run, buf_[k].m, cfg_);
      buf_[k].post = run;
    }
    const double newest = buf_.back().m.timestamp;
    while (!buf_.empty() && buf_.front().m.timestamp < newest - cfg_.replay_window) {
      base_ = buf_.front().post;
      buf_.erase(buf_.begin());
    }
  }

  const StateEstimate& current() const { return buf_.empty() ? base_ : buf_.back().post; }

  /// Read-only prediction of the current estimate to a later query time.
  StateEstimate predict_to(double t) const {
    return kf_predict(current(), {}, t, cfg_);
  }

  const KalmanConfig& config() const { return cfg_; }

 private:
  struct Entry {
    Measurement m;
    StateEstimate post;
  };
  static bool entry_less(const Entry& a, const Entry& b) {
    return std::tuple(a.m.timestamp, static_cast<int>(a.m.kind), a.m.seq) <
           std::tuple(b.m.timestamp, static_cast<int>(b.m.kind), b.m.seq);
  }

  KalmanConfig cfg_;
  StateEstimate base_;
  std::vector<Entry> buf_;
};

}  // namespace drift
