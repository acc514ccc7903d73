#pragma once

#include <cmath>

#include "drift/errors.hpp"
#include "drift/numeric.hpp"

namespace drift {

/// Output-feedback L1 augmentation on the curvature channel. A first-order
/// reference model M(s) = 1/(m_tau s + 1) predicts the curvature response to
/// the commanded reference; the prediction error drives a piecewise-constant
/// matched-uncertainty estimate sigma through the adaptive gain with hard
/// projection; the compensated reference is bandwidth-limited by the low-pass
/// C(s) = wc/(s + wc) before it reaches the feedforward/feedback controller.
struct L1Config {
  double m_tau = 0.3;        // reference model time constant [s]
  double c_cutoff = 8.0;     // C(s) cutoff [rad/s]
  double adapt_gain = 100.0; // Gamma; 0 disables adaptation
  double sigma_max = 0.2;    // projection bound on |sigma| [1/m]
  bool bypass_filter = false;  // test hook: route around C(s)
};

class L1Adaptive {
 public:
  explicit L1Adaptive(const L1Config& cfg) : cfg_(cfg) {
    if (!(cfg_.m_tau > 0.0) || !(cfg_.c_cutoff > 0.0) || cfg_.adapt_gain < 0.0 ||
        !(cfg_.sigma_max >= 0.0))
      throw Error("L1Adaptive: invalid configuration");
  }

  /// One tick: returns the reshaped curvature reference kappa_ac.
  double update(double kappa_meas, double kappa_ref, double dt) {
    if (!(dt > 0.0)) throw Error("L1Adaptive: dt must be positive");
    if (!predictor_primed_) {
      kappa_hat_ = kappa_meas;
      predictor_primed_ = true;
    }

    const double err = kappa_hat_ - kappa_meas;
    const double sigma_raw = sigma_hat_ - cfg_.adapt_gain * err * dt;
    sigma_hat_ = clamp(sigma_raw, -cfg_.sigma_max, cfg_.sigma_max);
    projected_ = sigma_hat_ != sigma_raw;

    const double kappa_ac = shape(kappa_ref - sigma_hat_, dt);

    // Zero-order-hold step of the reference-model predictor.
    const double decay = std::exp(-dt / cfg_.m_tau);
    kappa_hat_ = decay * kappa_hat_ + (1.0 - decay) * (kappa_ac + sigma_hat_);
    return kappa_ac;
  }

  /// Shape the reference through C(s) without adapting: used while the
  /// curvature measurement is invalid. Keeps filter continuity; the predictor
  /// re-primes on the next adapted tick.
  double feedthrough(double kappa_ref, double dt) {
    if (!(dt > 0.0)) throw Error("L1Adaptive: dt must be positive");
    projected_ = false;
    return shape(kappa_ref - sigma_hat_, dt);
  }

  double sigma() const { return sigma_hat_; }
  double predictor() const { return kappa_hat_; }
  bool projection_active() const { return projected_; }

  void reset() {
    kappa_hat_ = 0.0;
    sigma_hat_ = 0.0;
    c_in_prev_ = 0.0;
    c_out_prev_ = 0.0;
    predictor_primed_ = false;
    filter_primed_ = false;
    projected_ = false;
  }

  const L1Config& config() const { return cfg_; }

 private:
  /// Bilinear one-pole low-pass with exact unit DC gain; the state is primed
  /// to pass the first input through unchanged.
  double shape(double u_raw, double dt) {
    if (cfg_.bypass_filter) return u_raw;
    if (!filter_primed_) {
      c_in_prev_ = u_raw;
      c_out_prev_ = u_raw;
      filter_primed_ = true;
    }
    const double a = 0.5 * cfg_.c_cutoff * dt;
    const double out = ((1.0 - a) * c_out_prev_ + a * (u_raw + c_in_prev_)) / (1.0 + a);
    c_in_prev_ = u_raw;
    c_out_prev_ = out;
    return out;
  }

  L1Config cfg_;
  double kappa_hat_ = 0.0;
  double sigma_hat_ = 0.0;
  double c_in_prev_ = 0.0;
  double c_out_prev_ = 0.0;
  bool predictor_primed_ = false;
  bool filter_primed_ = false;
  bool projected_ = false;
};

}  // namespace drift
