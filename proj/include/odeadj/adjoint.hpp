#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "odeadj/norm.hpp"
#include "odeadj/solver.hpp"
#include "odeadj/stats.hpp"
#include "odeadj/vector_field.hpp"

namespace odeadj {

/// Layout of the backward state [a_t (1) | z (d) | a_z (d) | a_theta (p)].
struct AdjointPartition {
    std::size_t d = 1;
    std::size_t p = 0;

    static constexpr std::size_t a_t = 0;
    constexpr std::size_t z() const noexcept { return 1; }
    constexpr std::size_t a_z() const noexcept { return 1 + d; }
    constexpr std::size_t a_theta() const noexcept { return 1 + 2 * d; }
    constexpr std::size_t total() const noexcept { return 1 + 2 * d + p; }
};

enum class NormMode { default_norm, seminorm };

std::string_view to_string(NormMode mode) noexcept;
/// Accepts "default" or "seminorm"; throws ContractViolation otherwise.
NormMode parse_norm_mode(std::string_view name);

/// Writes [-a_z.df/dt | f | -a_z.df/dz | -a_z.df/dtheta] into out. Only the
/// z and a_z blocks of aug are read.
void augmented_dynamics(const VectorField& field, double t, std::span<const double> aug, std::span<double> out);
StateVector augmented_dynamics(const VectorField& field, double t, std::span<const double> aug);

/// max of the RMS over the a_t, z, a_z, a_theta groups (a_theta dropped when p = 0).
NormSpec make_default_norm(std::size_t d, std::size_t p);
/// Same groups as the default norm, with a_t and a_theta weighted zero.
NormSpec make_seminorm(std::size_t d, std::size_t p);
NormSpec make_adjoint_norm(NormMode mode, std::size_t d, std::size_t p);

struct GradientResult {
    StateVector dL_dz0;
    StateVector dL_dtheta;
    double dL_dtau = 0.0;
    double dL_dT = 0.0;
    SolveStats stats;  // backward pass only
};

/// Gradients of a loss depending on z(T) alone, given z(T) from a forward
/// solve over [tau, T]. z is reconstructed backward alongside the adjoint.
GradientResult backprop(const VectorField& field, std::span<const double> z_T, double tau, double T,
                        std::span<const double> dL_dzT, const Tolerances& tol, NormMode mode);

struct Checkpoint {
    double t = 0.0;
    StateVector z;
};

/// Gradients of a loss sum_i l_i(z(t_i)) over observations t_0 <= t_1 < ... < t_n
/// recorded in a forward solve that started at tau = t_start. Each segment is
/// solved backward separately; at every observation the local cotangent is
/// added to a_z and z is reset to the stored checkpoint. dL_dT refers to the
/// last observation time.
GradientResult backprop_multi(const VectorField& field, double t_start, std::span<const Checkpoint> checkpoints,
                              std::span<const StateVector> cotangents, const Tolerances& tol, NormMode mode);

}  // namespace odeadj
