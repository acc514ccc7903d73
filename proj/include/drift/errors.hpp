#pragma once

#include <stdexcept>
#include <string>

namespace drift {

/// Base class for all recoverable runtime failures raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state or derivative stopped being finite during integration.
class IntegratorDivergence : public Error {
 public:
  using Error::Error;
};

/// Load-transfer denominator in the normal-force equations fell below its guard.
class DegenerateLoadTransfer : public Error {
 public:
  using Error::Error;
};

/// Measurement older than the replay buffer, or a non-monotone prediction request.
class OutOfOrderMeasurement : public Error {
 public:
  using Error::Error;
};

/// Innovation covariance could not be factorized.
class NumericalConditioning : public Error {
 public:
  using Error::Error;
};

/// Circle fit did not converge; message carries the last iterate.
class FitFailure : public Error {
 public:
  using Error::Error;
};

/// Friction loss landscape is flat (no excitation in the window).
class UnidentifiableFriction : public Error {
 public:
  using Error::Error;
};

/// Newton converged to the grip branch or diverged; reseed required.
class BranchCapture : public Error {
 public:
  using Error::Error;
};

/// Too many infeasible cells in a generated equilibrium table.
class TableQuality : public Error {
 public:
  using Error::Error;
};

/// Bearing angle undefined (speed below threshold or vehicle at the center).
class UndefinedBearing : public Error {
 public:
  using Error::Error;
};

/// Polar-kinematics integration hit d -> 0.
class SingularKinematics : public Error {
 public:
  using Error::Error;
};

/// Controller received estimates older than the staleness bound.
class StaleEstimate : public Error {
 public:
  using Error::Error;
};

/// Configuration file or override failed validation; message names the key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace drift
