#pragma once

#include <stdexcept>
#include <string>

namespace stsparse {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent configuration input.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// J2 subgradient construction at u = 0 when no admissible element is
/// aligned with the residual (dual-norm overflow).
class DegenerateCase : public Error {
public:
  using Error::Error;
};

/// Inner prox iteration exhausted its cap before reaching the residual target.
class ProxNoConvergence : public Error {
public:
  ProxNoConvergence(const std::string& msg, double residual)
      : Error(msg + " (residual " + std::to_string(residual) + ")"), residual(residual) {}
  double residual;
};

/// Cone test invoked at a base point that violates the box constraints.
class InfeasibleBase : public Error {
public:
  using Error::Error;
};

/// First-order residual above tolerance where a stationary point is required.
class NotStationary : public Error {
public:
  NotStationary(const std::string& msg, double residual)
      : Error(msg + " (first-order residual " + std::to_string(residual) + ")"),
        residual(residual) {}
  double residual;
};

/// Direction fails the critical-cone test where a critical one is required.
class NotCritical : public Error {
public:
  using Error::Error;
};

/// Operation requires a nonzero base function (e.g. j2(u) > 0).
class ZeroBase : public Error {
public:
  using Error::Error;
};

/// Second subderivative of G2 at u = 0 in a critical direction: the value
/// is an open problem and is deliberately not reported as a number.
class UnknownValue : public Error {
public:
  using Error::Error;
};

/// Pairing test and pointwise characterization disagree beyond tolerance;
/// signals a discretization bug rather than a property of the data.
class InconsistentCharacterization : public Error {
public:
  using Error::Error;
};

/// Linear system solve failed (singular or not SPD as required).
class SingularSystem : public Error {
public:
  using Error::Error;
};

/// Newton iteration for the state equation failed to converge.
class NewtonDiverged : public Error {
public:
  NewtonDiverged(int step, double residual)
      : Error("Newton diverged at time step " + std::to_string(step) +
              " (residual " + std::to_string(residual) + ")"),
        step(step), residual(residual) {}
  int step;
  double residual;
};

}  // namespace stsparse
