#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace odeadj {

/// Flat array of reals; the universal state representation for every solve.
using StateVector = std::vector<double>;

/// A precondition of a public operation was violated (dimension mismatch,
/// malformed partition, non-monotone observation times, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A stage evaluation of the dynamics produced NaN or Inf.
class NonFiniteDynamics : public SolverError {
public:
    NonFiniteDynamics(double t, int stage, const std::string& context = {});

    double time() const noexcept { return t_; }
    /// Runge-Kutta stage index (0-based), or -1 outside a step.
    int stage() const noexcept { return stage_; }

private:
    double t_;
    int stage_;
};

/// Step size shrank below the underflow floor after repeated rejections.
class StepSizeUnderflow : public SolverError {
public:
    StepSizeUnderflow(double t, double dt, const std::string& context = {});

    double time() const noexcept { return t_; }
    double step() const noexcept { return dt_; }

private:
    double t_;
    double dt_;
};

void require(bool condition, const char* what);

}  // namespace odeadj
