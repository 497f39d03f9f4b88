#include "odeadj/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "odeadj/vector_field.hpp"

namespace odeadj {

namespace {

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kRatioFloor = 1e-10;
constexpr double kUnderflowFraction = 1e-14;
constexpr double kFirstStepFloor = 1e-6;

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

ButcherTableau make_dormand_prince() {
    ButcherTableau tb;
    tb.c = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
    tb.a[1] = {1.0 / 5.0};
    tb.a[2] = {3.0 / 40.0, 9.0 / 40.0};
    tb.a[3] = {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0};
    tb.a[4] = {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0};
    tb.a[5] = {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0};
    tb.a[6] = {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0};
    tb.b = {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
    tb.b_hat = {5179.0 / 57600.0,  0.0,           7571.0 / 16695.0, 393.0 / 640.0,
                -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0};
    tb.fsal = true;
    return tb;
}

}  // namespace

void Tolerances::validate() const {
    require(std::isfinite(rtol) && rtol > 0.0, "tolerances: rtol must be positive and finite");
    require(std::isfinite(atol) && atol > 0.0, "tolerances: atol must be positive and finite");
}

const ButcherTableau& ButcherTableau::dormand_prince() {
    static const ButcherTableau tableau = make_dormand_prince();
    return tableau;
}

Rhs field_rhs(const VectorField& field) {
    return Rhs(field.state_dim(),
               [&field](double t, std::span<const double> y, std::span<double> dydt) { field.eval_f(t, y, dydt); });
}

StateVector error_scale(std::span<const double> y_prev, std::span<const double> y_cand, const Tolerances& tol) {
    require(y_prev.size() == y_cand.size(), "error_scale: length mismatch");
    StateVector scale(y_prev.size());
    for (std::size_t i = 0; i < scale.size(); ++i)
        scale[i] = tol.atol + tol.rtol * std::max(std::abs(y_prev[i]), std::abs(y_cand[i]));
    return scale;
}

RkStep rk_step(const Rhs& rhs, double t, std::span<const double> y, double dt, const ButcherTableau& tableau,
               FsalCache& cache) {
    constexpr auto S = ButcherTableau::kStages;
    const auto n = y.size();
    require(n == rhs.dim(), "rk_step: state length does not match dynamics");
    require(dt != 0.0 && std::isfinite(dt), "rk_step: step size must be finite and non-zero");

    std::array<StateVector, S> k;
    if (!cache.valid) {
        cache.f.assign(n, 0.0);
        rhs(t, y, cache.f);
        if (!all_finite(cache.f)) throw NonFiniteDynamics(t, 0);
        cache.valid = true;
    }
    require(cache.f.size() == n, "rk_step: stale FSAL cache");
    k[0] = cache.f;

    StateVector stage(n);
    for (std::size_t s = 1; s < S; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s; ++j) acc += tableau.a[s][j] * k[j][i];
            stage[i] = y[i] + dt * acc;
        }
        const double ts = t + tableau.c[s] * dt;
        if (!all_finite(stage)) throw NonFiniteDynamics(ts, static_cast<int>(s));
        k[s].assign(n, 0.0);
        rhs(ts, stage, k[s]);
        if (!all_finite(k[s])) throw NonFiniteDynamics(ts, static_cast<int>(s));
    }

    RkStep out;
    out.y_candidate.resize(n);
    out.y_err.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double hi = 0.0, err = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            hi += tableau.b[s] * k[s][i];
            err += (tableau.b[s] - tableau.b_hat[s]) * k[s][i];
        }
        out.y_candidate[i] = y[i] + dt * hi;
        out.y_err[i] = dt * err;
    }
    if (!all_finite(out.y_candidate)) throw NonFiniteDynamics(t + dt, static_cast<int>(S - 1));

    if (tableau.fsal) {
        // The last stage was evaluated at (t + dt, y_candidate).
        out.next = {true, std::move(k[S - 1])};
    }
    return out;
}

double adapt_step_size(double error_ratio, double dt) {
    const double r = std::max(error_ratio, kRatioFloor);
    const double factor = std::clamp(kSafety * std::pow(r, -1.0 / 5.0), kMinFactor, kMaxFactor);
    return dt * factor;
}

double initial_step(const Rhs& rhs, double t0, std::span<const double> y0, const Tolerances& tol,
                    const NormSpec& norm, double direction) {
    const auto n = y0.size();
    require(n == rhs.dim() && n == norm.size(), "initial_step: length mismatch");
    require(all_finite(y0), "initial_step: y0 must be finite");
    const double dir = direction < 0.0 ? -1.0 : 1.0;

    StateVector scale(n), tmp(n), f0(n), f1(n), y1(n);
    for (std::size_t i = 0; i < n; ++i) scale[i] = tol.atol + tol.rtol * std::abs(y0[i]);

    for (std::size_t i = 0; i < n; ++i) tmp[i] = y0[i] / scale[i];
    const double d0 = norm(tmp);

    rhs(t0, y0, f0);
    if (!all_finite(f0)) throw NonFiniteDynamics(t0, 0, "initial step");
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f0[i] / scale[i];
    const double d1 = norm(tmp);

    const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? kFirstStepFloor : 0.01 * d0 / d1;

    for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + dir * h0 * f0[i];
    rhs(t0 + dir * h0, y1, f1);
    if (!all_finite(f1)) throw NonFiniteDynamics(t0 + dir * h0, 1, "initial step");
    for (std::size_t i = 0; i < n; ++i) tmp[i] = (f1[i] - f0[i]) / scale[i];
    const double d2 = norm(tmp) / h0;

    // max(d1, d2) == 0 gives +inf here, leaving 100 * h0.
    const double h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    return dir * std::min(100.0 * h0, h1);
}

Solution integrate(const Rhs& rhs, std::span<const double> y0, double t0, double t1, const Tolerances& tol,
                   const NormSpec& norm, const Observers& observers, const IntegrateOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    tol.validate();
    require(t0 != t1 && std::isfinite(t0) && std::isfinite(t1), "integrate: empty or non-finite time span");
    require(y0.size() == rhs.dim(), "integrate: y0 length does not match dynamics");
    require(norm.size() == y0.size(), "integrate: norm does not cover the state");
    const double dir = t1 > t0 ? 1.0 : -1.0;

    const auto& stops = options.stop_times;
    for (std::size_t i = 0; i < stops.size(); ++i) {
        require((stops[i] - t0) * dir > 0.0 && (t1 - stops[i]) * dir > 0.0,
                "integrate: stop times must lie strictly inside the span");
        require(i == 0 || (stops[i] - stops[i - 1]) * dir > 0.0, "integrate: stop times must be monotone");
    }

    const auto nfe_before = rhs.calls();
    Solution sol;
    auto& stats = sol.stats;
    sol.y.assign(y0.begin(), y0.end());
    double t = t0;
    if (observers.on_accept) observers.on_accept(t, sol.y);

    double dt = options.first_step ? *options.first_step : initial_step(rhs, t0, y0, tol, norm, dir);
    require(dt * dir > 0.0 && std::isfinite(dt), "integrate: first step must point toward t1");
    stats.nfe = rhs.calls() - nfe_before;

    const auto& tableau = ButcherTableau::dormand_prince();
    const double min_step = kUnderflowFraction * std::abs(t1 - t0);
    FsalCache cache;
    std::size_t next_stop = 0;
    StateVector ratio_buf(y0.size());

    while (t != t1) {
        const double target = next_stop < stops.size() ? stops[next_stop] : t1;
        const bool clipped = (t + dt - target) * dir >= 0.0;
        const double step = clipped ? target - t : dt;

        auto attempt = rk_step(rhs, t, sol.y, step, tableau, cache);
        const auto scale = error_scale(sol.y, attempt.y_candidate, tol);
        for (std::size_t i = 0; i < ratio_buf.size(); ++i) ratio_buf[i] = attempt.y_err[i] / scale[i];
        const double r = norm(ratio_buf);
        if (std::isnan(r)) throw NonFiniteDynamics(t, -1, "error ratio");
        const bool accepted = r <= 1.0;

        stats.nfe = rhs.calls() - nfe_before;
        record_attempt(stats, t, step, r, accepted);
        if (observers.on_attempt)
            observers.on_attempt({t, step, r, accepted, sol.y, attempt.y_candidate, attempt.y_err, scale});

        dt = adapt_step_size(r, step);
        if (accepted) {
            t = clipped ? target : t + step;
            if (clipped && target != t1) ++next_stop;
            sol.y = std::move(attempt.y_candidate);
            cache = std::move(attempt.next);
            if (observers.on_accept) observers.on_accept(t, sol.y);
        } else if (std::abs(dt) < min_step) {
            throw StepSizeUnderflow(t, dt);
        }
    }

    stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return sol;
}

Solution integrate(const VectorField& field, std::span<const double> z0, double t0, double t1,
                   const Tolerances& tol, const Observers& observers, const IntegrateOptions& options) {
    return integrate(field_rhs(field), z0, t0, t1, tol, NormSpec::rms(field.state_dim()), observers, options);
}

}  // namespace odeadj
