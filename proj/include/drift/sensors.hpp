#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "drift/kalman.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift {

struct PoseSensorConfig {
  double rate_hz = 50.0;
  double latency = 0.02;        // sampling-to-delivery delay [s]
  double sigma_pos = 0.005;     // [m]
  double sigma_heading = 0.01;  // [rad]
};

struct GyroSensorConfig {
  double rate_hz = 200.0;
  double latency = 0.0;
  double sigma = 0.02;  // [rad/s]
  double bias = 0.005;  // [rad/s], added to the truth; the filter is configured with it
};

struct SensorSuiteConfig {
  PoseSensorConfig pose;
  GyroSensorConfig yaw_rate;
};

struct Delivery {
  double deliver_at = 0.0;
  Measurement m;
};

/// Generates the measurement stream for a run: each sensor samples the true
/// state on its own clock, stamps the sample with the true sampling time, and
/// delivers it after its configured latency.
class SensorSimulator {
 public:
  SensorSimulator(const SensorSuiteConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed) {}

  /// Call once per physics step with the true state at time t. Sampling
  /// instants are compared with a half-step tolerance so integer-rate clocks
  /// stay locked to the physics grid.
  std::vector<Delivery> sample(const VehicleState& truth, double t, double phys_dt) {
    std::vector<Delivery> out;
    const double eps = 0.5 * phys_dt;
    if (t + eps >= next_pose_) {
      next_pose_ += 1.0 / cfg_.pose.rate_hz;
      Measurement m;
      m.timestamp = t;
      m.kind = MeasurementKind::pose;
      m.value = Eigen::Vector3d(truth.x + cfg_.pose.sigma_pos * rng_.gaussian(),
                                truth.y + cfg_.pose.sigma_pos * rng_.gaussian(),
                                wrap_angle(truth.psi + cfg_.pose.sigma_heading * rng_.gaussian()));
      m.variance = Eigen::Vector3d(var_floor(cfg_.pose.sigma_pos),
                                   var_floor(cfg_.pose.sigma_pos),
                                   var_floor(cfg_.pose.sigma_heading));
      m.dim = 3;
      m.seq = seq_++;
      out.push_back({t + cfg_.pose.latency, m});
    }
    if (t + eps >= next_gyro_) {
      next_gyro_ += 1.0 / cfg_.yaw_rate.rate_hz;
      Measurement m;
      m.timestamp = t;
      m.kind = MeasurementKind::yaw_rate;
      m.value = Eigen::Vector3d(
          truth.psidot + cfg_.yaw_rate.bias + cfg_.yaw_rate.sigma * rng_.gaussian(), 0.0,
          0.0);
      m.variance = Eigen::Vector3d(var_floor(cfg_.yaw_rate.sigma), 1.0, 1.0);
      m.dim = 1;
      m.seq = seq_++;
      out.push_back({t + cfg_.yaw_rate.latency, m});
    }
    return out;
  }

 private:
  // Zero-noise configurations still need a positive measurement variance.
  static double var_floor(double sigma) { return std::max(sigma * sigma, 1e-12); }

  SensorSuiteConfig cfg_;
  Rng rng_;
  double next_pose_ = 0.0;
  double next_gyro_ = 0.0;
  std::uint64_t seq_ = 0;
};

}  // namespace drift
