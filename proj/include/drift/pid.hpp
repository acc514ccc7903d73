#pragma once

#include <limits>

#include "drift/errors.hpp"
#include "drift/numeric.hpp"

namespace drift {

/// Discrete PID with clamped integral, back-calculation anti-windup, and a
/// first-order filtered derivative. Gains may be negative; the loop direction
/// is a property of the plant, not of this block.
struct PidConfig {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double i_min = -std::numeric_limits<double>::infinity();
  double i_max = std::numeric_limits<double>::infinity();
  double out_min = -std::numeric_limits<double>::infinity();
  double out_max = std::numeric_limits<double>::infinity();
  double d_tau = 0.02;    // derivative filter time constant [s]
  double period = 0.01;   // sample period [s]
};

class Pid {
 public:
  explicit Pid(const PidConfig& cfg) : cfg_(cfg) {
    if (!(cfg_.period > 0.0)) throw Error("Pid: sample period must be positive");
    if (cfg_.i_min > cfg_.i_max || cfg_.out_min > cfg_.out_max)
      throw Error("Pid: limits out of order");
  }

  /// One controller tick; returns the feedback contribution.
  double update(double error) {
    const double dt = cfg_.period;
    const double de = primed_ ? (error - prev_error_) / dt : 0.0;
    d_filt_ += dt / (cfg_.d_tau + dt) * (de - d_filt_);
    prev_error_ = error;
    primed_ = true;

    integral_ = clamp(integral_ + cfg_.ki * error * dt, cfg_.i_min, cfg_.i_max);
    const double unsat = cfg_.kp * error + integral_ + cfg_.kd * d_filt_;
    const double out = clamp(unsat, cfg_.out_min, cfg_.out_max);
    saturated_ = out != unsat;
    if (saturated_)
      integral_ = clamp(integral_ + (out - unsat), cfg_.i_min, cfg_.i_max);
    return out;
  }

  bool saturated() const { return saturated_; }
  double integral() const { return integral_; }

  void reset() {
    integral_ = 0.0;
    prev_error_ = 0.0;
    d_filt_ = 0.0;
    primed_ = false;
    saturated_ = false;
  }

  const PidConfig& config() const { return cfg_; }

 private:
  PidConfig cfg_;
  double integral_ = 0.0;
  double prev_error_ = 0.0;
  double d_filt_ = 0.0;
  bool primed_ = false;
  bool saturated_ = false;
};

}  // namespace drift
