#include "odeadj/adjoint.hpp"

#include <cmath>

#include <fmt/core.h>

namespace odeadj {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Solution solve_backward(const VectorField& field, const StateVector& aug, double from, double to,
                        const Tolerances& tol, const NormSpec& norm) {
    const AdjointPartition part{field.state_dim(), field.param_count()};
    const Rhs rhs(part.total(), [&field](double t, std::span<const double> y, std::span<double> dy) {
        augmented_dynamics(field, t, y, dy);
    });
    try {
        return integrate(rhs, aug, from, to, tol, norm);
    } catch (const NonFiniteDynamics& e) {
        throw NonFiniteDynamics(e.time(), e.stage(), "backward pass");
    } catch (const StepSizeUnderflow& e) {
        throw StepSizeUnderflow(e.time(), e.step(), "backward pass");
    }
}

}  // namespace

std::string_view to_string(NormMode mode) noexcept {
    return mode == NormMode::seminorm ? "seminorm" : "default";
}

NormMode parse_norm_mode(std::string_view name) {
    if (name == "default") return NormMode::default_norm;
    if (name == "seminorm") return NormMode::seminorm;
    throw ContractViolation(fmt::format("unknown norm mode '{}'", name));
}

void augmented_dynamics(const VectorField& field, double t, std::span<const double> aug, std::span<double> out) {
    const AdjointPartition part{field.state_dim(), field.param_count()};
    require(aug.size() == part.total() && out.size() == part.total(), "augmented_dynamics: length mismatch");
    const auto d = part.d;
    const auto z = aug.subspan(part.z(), d);
    const auto a_z = aug.subspan(part.a_z(), d);

    field.eval_f(t, z, out.subspan(part.z(), d));
    field.vjp_z(t, z, a_z, out.subspan(part.a_z(), d));
    field.vjp_theta(t, z, a_z, out.subspan(part.a_theta(), part.p));
    out[AdjointPartition::a_t] = -field.vjp_t(t, z, a_z);
    for (std::size_t i = part.a_z(); i < part.total(); ++i) out[i] = -out[i];
}

StateVector augmented_dynamics(const VectorField& field, double t, std::span<const double> aug) {
    StateVector out(aug.size());
    augmented_dynamics(field, t, aug, out);
    return out;
}

NormSpec make_default_norm(std::size_t d, std::size_t p) {
    require(d >= 1, "make_default_norm: d must be positive");
    const AdjointPartition part{d, p};
    std::vector<NormGroup> groups{{0, 1, 1.0}, {part.z(), d, 1.0}, {part.a_z(), d, 1.0}};
    if (p > 0) groups.push_back({part.a_theta(), p, 1.0});
    return NormSpec(std::move(groups));
}

NormSpec make_seminorm(std::size_t d, std::size_t p) {
    require(d >= 1, "make_seminorm: d must be positive");
    const AdjointPartition part{d, p};
    std::vector<NormGroup> groups{{0, 1, 0.0}, {part.z(), d, 1.0}, {part.a_z(), d, 1.0}};
    if (p > 0) groups.push_back({part.a_theta(), p, 0.0});
    return NormSpec(std::move(groups));
}

NormSpec make_adjoint_norm(NormMode mode, std::size_t d, std::size_t p) {
    return mode == NormMode::seminorm ? make_seminorm(d, p) : make_default_norm(d, p);
}

GradientResult backprop(const VectorField& field, std::span<const double> z_T, double tau, double T,
                        std::span<const double> dL_dzT, const Tolerances& tol, NormMode mode) {
    const Checkpoint last{T, StateVector(z_T.begin(), z_T.end())};
    const StateVector cot(dL_dzT.begin(), dL_dzT.end());
    return backprop_multi(field, tau, std::span(&last, 1), std::span(&cot, 1), tol, mode);
}

GradientResult backprop_multi(const VectorField& field, double t_start, std::span<const Checkpoint> checkpoints,
                              std::span<const StateVector> cotangents, const Tolerances& tol, NormMode mode) {
    const AdjointPartition part{field.state_dim(), field.param_count()};
    const auto d = part.d;
    require(!checkpoints.empty(), "backprop: at least one checkpoint required");
    require(cotangents.size() == checkpoints.size(), "backprop: one cotangent per checkpoint");
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        require(checkpoints[i].z.size() == d && cotangents[i].size() == d, "backprop: checkpoint dimension mismatch");
        const double prev = i == 0 ? t_start : checkpoints[i - 1].t;
        require(i == 0 ? checkpoints[i].t >= prev : checkpoints[i].t > prev,
                "backprop: checkpoint times must be strictly increasing and not before the start time");
        for (double v : cotangents[i])
            if (!std::isfinite(v)) throw ContractViolation("backprop: cotangent must be finite");
    }
    const auto norm = make_adjoint_norm(mode, d, part.p);

    StateVector aug(part.total(), 0.0);
    StateVector f(d);
    // Adds observation i's cotangent to a_z and resets z. The start time
    // is excluded from the time channel: z(tau) = z0 does not move with tau.
    auto inject = [&](std::size_t i) {
        const auto& cp = checkpoints[i];
        std::copy(cp.z.begin(), cp.z.end(), aug.begin() + part.z());
        for (std::size_t j = 0; j < d; ++j) aug[part.a_z() + j] += cotangents[i][j];
        if (cp.t == t_start) return 0.0;
        field.eval_f(cp.t, cp.z, f);
        const double dL_dti = dot(cotangents[i], f);
        aug[AdjointPartition::a_t] -= dL_dti;
        return dL_dti;
    };

    GradientResult result;
    std::size_t cur = checkpoints.size() - 1;
    result.dL_dT = inject(cur);
    while (true) {
        const double from = checkpoints[cur].t;
        const double to = cur > 0 ? checkpoints[cur - 1].t : t_start;
        if (from != to) {
            auto seg = solve_backward(field, aug, from, to, tol, norm);
            aug = std::move(seg.y);
            merge_stats(result.stats, seg.stats);
        }
        if (cur == 0) break;
        --cur;
        inject(cur);
    }

    result.dL_dz0.assign(aug.begin() + part.a_z(), aug.begin() + part.a_z() + d);
    result.dL_dtheta.assign(aug.begin() + part.a_theta(), aug.end());
    result.dL_dtau = aug[AdjointPartition::a_t];
    return result;
}

}  // namespace odeadj
