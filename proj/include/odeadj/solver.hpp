#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "odeadj/norm.hpp"
#include "odeadj/stats.hpp"
#include "odeadj/types.hpp"

namespace odeadj {

class VectorField;

struct Tolerances {
    double rtol = 1e-6;
    double atol = 1e-9;

    /// Throws ContractViolation unless both are strictly positive and finite.
    void validate() const;
};

/// Explicit embedded Runge-Kutta pair. Only Dormand-Prince 5(4) is provided.
struct ButcherTableau {
    static constexpr std::size_t kStages = 7;

    std::array<double, kStages> c{};
    std::array<std::array<double, kStages>, kStages> a{};  // strictly lower triangular
    std::array<double, kStages> b{};                       // 5th order, propagated
    std::array<double, kStages> b_hat{};                   // embedded 4th order
    bool fsal = false;

    static const ButcherTableau& dormand_prince();
};

using DynamicsFn = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

/// Right-hand side handed to the integrator. Counts every call; that count is
/// the NFE reported in SolveStats.
class Rhs {
public:
    Rhs(std::size_t dim, DynamicsFn fn) : dim_(dim), fn_(std::move(fn)) {}

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t calls() const noexcept { return calls_; }

    void operator()(double t, std::span<const double> y, std::span<double> dydt) const {
        ++calls_;
        fn_(t, y, dydt);
    }

private:
    std::size_t dim_;
    DynamicsFn fn_;
    mutable std::uint64_t calls_ = 0;
};

/// Forward dynamics f(t, z, theta) of a field, as an Rhs.
Rhs field_rhs(const VectorField& field);

/// f(t, y) at the start of the next step, when known.
struct FsalCache {
    bool valid = false;
    StateVector f;
};

struct RkStep {
    StateVector y_candidate;
    StateVector y_err;
    /// f(t + dt, y_candidate); becomes the cache if the step is accepted.
    FsalCache next;
};

/// SCALE_i = atol + rtol * max(|y_prev_i|, |y_cand_i|).
StateVector error_scale(std::span<const double> y_prev, std::span<const double> y_cand, const Tolerances& tol);

/// One Dormand-Prince attempt from (t, y) with signed step dt. Fills `cache`
/// with f(t, y) when it is cold (7 evaluations), otherwise reuses it (6).
/// Throws NonFiniteDynamics naming the stage that produced a NaN/Inf.
RkStep rk_step(const Rhs& rhs, double t, std::span<const double> y, double dt, const ButcherTableau& tableau,
               FsalCache& cache);

/// dt * clamp(0.9 * max(r, 1e-10)^(-1/5), 0.2, 10).
double adapt_step_size(double error_ratio, double dt);

/// Starting step from the usual two-evaluation heuristic; signed by
/// direction (+1 or -1).
double initial_step(const Rhs& rhs, double t0, std::span<const double> y0, const Tolerances& tol,
                    const NormSpec& norm, double direction);

/// Everything known about one attempt, for observers that need more than
/// the stats log.
struct AttemptView {
    double t;
    double dt;
    double error_ratio;
    bool accepted;
    std::span<const double> y;
    std::span<const double> y_candidate;
    std::span<const double> y_err;
    std::span<const double> scale;
};

struct Observers {
    /// Called at t0 and after every accepted step with the new (t, y).
    std::function<void(double t, std::span<const double> y)> on_accept;
    std::function<void(const AttemptView&)> on_attempt;
};

struct IntegrateOptions {
    /// Interior times the integrator must land on exactly (step clipping).
    std::vector<double> stop_times;
    /// Overrides the starting-step heuristic when set (signed).
    std::optional<double> first_step;
};

struct Solution {
    StateVector y;
    SolveStats stats;
};

/// Adaptive integration of y' = rhs(t, y) from t0 to t1 (either direction).
/// A step is accepted iff norm(y_err / SCALE) <= 1.
Solution integrate(const Rhs& rhs, std::span<const double> y0, double t0, double t1, const Tolerances& tol,
                   const NormSpec& norm, const Observers& observers = {}, const IntegrateOptions& options = {});

/// Forward solve of a field under the plain RMS norm over its state.
Solution integrate(const VectorField& field, std::span<const double> z0, double t0, double t1,
                   const Tolerances& tol, const Observers& observers = {}, const IntegrateOptions& options = {});

}  // namespace odeadj
