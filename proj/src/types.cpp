#include "odeadj/types.hpp"

#include <fmt/core.h>

namespace odeadj {

NonFiniteDynamics::NonFiniteDynamics(double t, int stage, const std::string& context)
    : SolverError(fmt::format("{}non-finite dynamics at t={} (stage {})",
                              context.empty() ? std::string{} : context + ": ", t, stage)),
      t_(t),
      stage_(stage) {}

StepSizeUnderflow::StepSizeUnderflow(double t, double dt, const std::string& context)
    : SolverError(fmt::format("{}step size underflow at t={} (dt={}); problem is likely stiff",
                              context.empty() ? std::string{} : context + ": ", t, dt)),
      t_(t),
      dt_(dt) {}

void require(bool condition, const char* what) {
    if (!condition) throw ContractViolation(what);
}

}  // namespace odeadj
